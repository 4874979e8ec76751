// Command line front end for the training/certification pipeline:
//   pbvae train-prior --config cfg.ini [overrides]
//   pbvae train       --config cfg.ini --prior out/prior.ckpt [overrides]
//   pbvae certify     --config cfg.ini --posterior out/posterior.ckpt --prior out/prior.ckpt
//   pbvae sweep       --config cfg.ini [overrides]

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <optional>

#include "pbvae/harness.hpp"

namespace {

struct Overrides {
  std::optional<double> beta;
  std::optional<double> sigma;
  std::optional<double> lambda;
  std::optional<std::string> objective;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
};

void add_override_flags(CLI::App* cmd, Overrides& ov) {
  cmd->add_option("--beta", ov.beta, "Override prior/train beta");
  cmd->add_option("--sigma", ov.sigma, "Override both prior standard deviations");
  cmd->add_option("--lambda", ov.lambda, "Override the KL attenuation factor");
  cmd->add_option("--objective", ov.objective, "Override the training objective");
  cmd->add_option("--seed", ov.seed, "Override the master seed");
  cmd->add_option("--out", ov.out, "Override the output directory");
}

pbvae::ExperimentConfig resolve(const std::string& config_path, const Overrides& ov) {
  pbvae::ExperimentConfig cfg = pbvae::load_config(config_path);
  if (ov.beta) {
    cfg.beta = *ov.beta;
    cfg.prior_beta = *ov.beta;
  }
  if (ov.sigma) {
    cfg.sigma_phi = *ov.sigma;
    cfg.sigma_theta = *ov.sigma;
  }
  if (ov.lambda) cfg.lambda = *ov.lambda;
  if (ov.objective) cfg.objective = pbvae::parse_objective(*ov.objective);
  if (ov.seed) cfg.master_seed = *ov.seed;
  if (ov.out) cfg.out_dir = *ov.out;
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"PAC-Bayes VAE training and risk certification"};
  app.require_subcommand(1);

  std::string config_path;
  std::string prior_path;
  std::string posterior_path;
  Overrides ov;

  auto* train_prior = app.add_subcommand("train-prior", "Learn the weight prior centre");
  train_prior->add_option("--config", config_path, "Config file")->required();
  add_override_flags(train_prior, ov);

  auto* train = app.add_subcommand("train", "Train the posterior on the chosen objective");
  train->add_option("--config", config_path, "Config file")->required();
  train->add_option("--prior", prior_path, "Prior checkpoint")->required();
  add_override_flags(train, ov);

  auto* certify = app.add_subcommand("certify", "Evaluate risk certificates");
  certify->add_option("--config", config_path, "Config file")->required();
  certify->add_option("--prior", prior_path, "Prior checkpoint")->required();
  certify->add_option("--posterior", posterior_path, "Posterior checkpoint")->required();
  add_override_flags(certify, ov);

  auto* sweep = app.add_subcommand("sweep", "Run a grid of configurations");
  sweep->add_option("--config", config_path, "Config file")->required();
  add_override_flags(sweep, ov);

  CLI11_PARSE(app, argc, argv);

  try {
    if (train_prior->parsed()) {
      const auto cfg = resolve(config_path, ov);
      std::cout << pbvae::cmd_train_prior(cfg) << '\n';
    } else if (train->parsed()) {
      const auto cfg = resolve(config_path, ov);
      std::cout << pbvae::cmd_train(cfg, prior_path) << '\n';
    } else if (certify->parsed()) {
      const auto cfg = resolve(config_path, ov);
      pbvae::RunReport report = pbvae::cmd_certify(cfg, posterior_path, prior_path);
      std::cout << pbvae::run_report_to_json(report) << '\n';
    } else if (sweep->parsed()) {
      const auto cfg = resolve(config_path, ov);
      const auto kv = pbvae::read_ini_file(config_path);
      const auto grid = pbvae::sweep_grid_from_map(kv, cfg);
      std::cout << pbvae::cmd_sweep(cfg, grid) << '\n';
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
