// Acceptance suite: one pass/fail line per criterion, exit code = number of
// failures. Desk-scale runs live under --out-dir and are reused when their
// artifacts already exist, so re-runs after a failure are cheap.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "oracles.hpp"
#include "pbvae/certificate.hpp"
#include "pbvae/checkpoint.hpp"
#include "pbvae/harness.hpp"

using namespace pbvae;
namespace fs = std::filesystem;

namespace {

struct Criterion {
  int id;
  bool pass;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

void progress(const std::string& msg) {
  std::fprintf(stderr, "[acceptance] %s\n", msg.c_str());
}

// ---------------------------------------------------------------------------
// Criterion 1: gradient suite over 100 random seeds, runtime < 1 minute.
// ---------------------------------------------------------------------------

VaeModel random_small_model(std::uint64_t seed, double scale) {
  RngStream rng(seed);
  VaeModel model = make_vae_model(5, 2, {4}, InitScheme::zero, rng);
  RngStream wrng(seed * 31 + 7);
  for (auto* params : {&model.phi, &model.theta}) {
    for (auto& layer : params->layers) {
      for (double& v : layer.weight.data) v = scale * wrng.next_gaussian();
      for (double& v : layer.bias.data) v = scale * wrng.next_gaussian();
    }
  }
  return model;
}

Tensor random_binary(std::size_t batch, std::size_t D, std::uint64_t seed) {
  RngStream rng(seed);
  Tensor x = Tensor::zeros({batch, D});
  for (double& v : x.data) v = rng.next_uniform() < 0.5 ? 0.0 : 1.0;
  return x;
}

Criterion criterion_gradients() {
  const auto t0 = std::chrono::steady_clock::now();
  double worst = 0.0;
  std::string worst_what = "none";
  auto track = [&](double err, const std::string& what) {
    if (err > worst) {
      worst = err;
      worst_what = what;
    }
  };
  // relu objectives are piecewise smooth; when a kink falls inside the FD
  // window the comparison is invalid at that step size, so shrink h until
  // the window is clean.
  auto fd_params_err = [](const ParamVector& analytic, const ParamVector& at, auto&& f) {
    double err = 1e300;
    for (double h : {1e-5, 1e-6, 1e-7}) {
      err = std::min(err, oracle::max_rel_err(analytic, oracle::finite_diff_params(f, at, h), 1e-5));
      if (err < 1e-4) break;
    }
    return err;
  };
  auto fd_scalar_err = [](double analytic, double at, auto&& f) {
    double err = 1e300;
    for (double h : {1e-5, 1e-6, 1e-7}) {
      err = std::min(err, oracle::rel_err(analytic, oracle::finite_diff_scalar(f, at, h), 1e-5));
      if (err < 1e-4) break;
    }
    return err;
  };

  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    // Plain MLP gradients.
    {
      MlpConfig cfg{4, {5}, 3, HiddenActivation::relu,
                    seed % 2 ? OutputActivation::sigmoid : OutputActivation::identity};
      RngStream rng(seed);
      ParamVector params = init_params(cfg, InitScheme::zero, rng);
      RngStream wrng(seed + 1000);
      for (auto& layer : params.layers) {
        for (double& v : layer.weight.data) v = 0.6 * wrng.next_gaussian();
        for (double& v : layer.bias.data) v = 0.6 * wrng.next_gaussian();
      }
      Tensor x = gaussian_sample(wrng, {3, 4});
      Tensor g_out = gaussian_sample(wrng, {3, 3});
      RngStream r0(0);
      ForwardCache cache;
      (void)mlp_forward(cfg, params, x, 0.0, r0, false, &cache);
      BackwardResult back = mlp_backward(cache, g_out);
      auto loss = [&](const ParamVector& p) {
        RngStream r(0);
        Tensor y = mlp_forward(cfg, p, x, 0.0, r, false);
        double acc = 0.0;
        for (std::size_t i = 0; i < y.data.size(); ++i) acc += y.data[i] * g_out.data[i];
        return acc;
      };
      track(fd_params_err(back.param_gradient, params, loss),
            "mlp seed " + std::to_string(seed));
    }

    // Beta-VAE objective with frozen latent noise.
    {
      VaeModel model = random_small_model(seed + 200, 0.5);
      Tensor x = random_binary(3, 5, seed + 300);
      LossConfig cfg{5e-3, 1};
      RngStream frozen(seed + 400);
      BetaVaeResult res = beta_vae_objective(model, x, 0.5, cfg, frozen);
      auto value_phi = [&](const ParamVector& p) {
        VaeModel m = model;
        m.phi = p;
        RngStream r(seed + 400);
        return beta_vae_objective(m, x, 0.5, cfg, r).value;
      };
      track(fd_params_err(res.grad_phi, model.phi, value_phi),
            "beta-vae phi seed " + std::to_string(seed));
      auto value_theta = [&](const ParamVector& p) {
        VaeModel m = model;
        m.theta = p;
        RngStream r(seed + 400);
        return beta_vae_objective(m, x, 0.5, cfg, r).value;
      };
      track(fd_params_err(res.grad_theta, model.theta, value_theta),
            "beta-vae theta seed " + std::to_string(seed));
    }

    // PAC-Bayes penalties and rho gradients with frozen weight noise.
    {
      VaeModel model = random_small_model(seed + 500, 0.5);
      VaeModel prior_model = random_small_model(seed + 600, 0.5);
      WeightPrior prior{prior_model.phi, prior_model.theta, 0.05, 0.05};
      PosteriorScale scales{std::log(0.02), std::log(0.03)};
      PacBayesConfig cfg;
      cfg.delta = 0.05;
      cfg.n_bound = 2000;
      cfg.bound_kind = seed % 2 ? BoundKind::quadratic : BoundKind::mcallester;
      cfg.kl_attenuation = 1.0;
      cfg.loss = LossConfig{5e-3, 1};
      Tensor batch = random_binary(3, 5, seed + 700);
      auto objective = [&](const VaeModel& m, const PosteriorScale& sc) {
        RngStream r(seed + 800);
        return cfg.bound_kind == BoundKind::mcallester
                   ? mcallester_objective(m, prior, sc, batch, cfg, r)
                   : quadratic_objective(m, prior, sc, batch, cfg, r);
      };
      PbObjectiveResult res = objective(model, scales);
      auto value_phi = [&](const ParamVector& p) {
        VaeModel m = model;
        m.phi = p;
        return objective(m, scales).value;
      };
      track(fd_params_err(res.grad_phi, model.phi, value_phi),
            "pb phi seed " + std::to_string(seed));
      auto value_rho = [&](double rho) {
        PosteriorScale sc = scales;
        sc.rho_phi = rho;
        return objective(model, sc).value;
      };
      track(fd_scalar_err(res.grad_rho_phi, scales.rho_phi, value_rho),
            "pb rho seed " + std::to_string(seed));
    }
  }

  const double elapsed = seconds_since(t0);
  Criterion c{1, worst < 1e-4 && elapsed < 60.0,
              "worst rel err " + fmt(worst) + " (" + worst_what + "), " + fmt(elapsed) + " s"};
  return c;
}

// ---------------------------------------------------------------------------
// Criterion 2: kl inversion oracle.
// ---------------------------------------------------------------------------

Criterion criterion_kl_inversion() {
  RngStream rng(21);
  double worst_roundtrip = 0.0;
  int exact_failures = 0;
  double worst_zero_p = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const double p = rng.next_uniform();
    const double c = rng.next_uniform();
    const double q = kl_inverse(p, c);
    if (q < 1.0) {
      worst_roundtrip = std::max(worst_roundtrip, std::abs(binary_kl(p, q) - c));
    }
    if (kl_inverse(p, 0.0) != p) ++exact_failures;
    const double c2 = 3.0 * rng.next_uniform();
    worst_zero_p = std::max(worst_zero_p,
                            std::abs(kl_inverse(0.0, c2) - (1.0 - std::exp(-c2))));
  }
  const bool pass = worst_roundtrip <= 1e-8 && exact_failures == 0 && worst_zero_p <= 1e-9;
  return Criterion{2, pass,
                   "max |kl(p, inv)-c| " + fmt(worst_roundtrip) + ", zero-budget exact " +
                       (exact_failures == 0 ? "yes" : "NO") + ", max |inv(0,c)-(1-e^-c)| " +
                       fmt(worst_zero_p)};
}

// ---------------------------------------------------------------------------
// Criterion 3: closed-form KLs vs Monte-Carlo estimates.
// ---------------------------------------------------------------------------

Criterion criterion_mc_kl() {
  RngStream rng(31);
  double worst = 0.0;
  for (int inst = 0; inst < 20; ++inst) {
    // Latent KL on a random diagonal gaussian, kept away from zero KL.
    std::vector<double> mu(3), sigma(3);
    for (int k = 0; k < 3; ++k) {
      mu[k] = 0.3 + 1.5 * rng.next_uniform();
      sigma[k] = 0.4 + 1.2 * rng.next_uniform();
    }
    EncoderOutput enc;
    enc.mu = Tensor({1, 3}, std::vector<double>(mu));
    enc.log_sigma = Tensor::zeros({1, 3});
    for (int k = 0; k < 3; ++k) enc.log_sigma.data[k] = std::log(sigma[k]);
    const double exact = latent_kl(enc).data[0];
    const double mc = oracle::mc_latent_kl(mu, sigma, 1000000, 1000 + inst);
    worst = std::max(worst, oracle::rel_err(exact, mc));

    // Weight-space KL on a small parameter vector.
    std::vector<double> center(5), prior_center(5);
    for (int k = 0; k < 5; ++k) {
      center[k] = 0.3 * rng.next_gaussian();
      prior_center[k] = 0.3 * rng.next_gaussian();
    }
    const double sigma_w = 0.2 + 0.3 * rng.next_uniform();
    const double s_w = 0.1 + 0.25 * rng.next_uniform();
    ParamVector c;
    c.layers.push_back({Tensor({5, 1}, std::vector<double>(center)), Tensor({0}, {})});
    ParamVector c0;
    c0.layers.push_back({Tensor({5, 1}, std::vector<double>(prior_center)), Tensor({0}, {})});
    const double exact_w = gaussian_weight_kl(c, c0, sigma_w * sigma_w, s_w * s_w);
    const double mc_w = oracle::mc_weight_kl(center, prior_center, sigma_w, s_w, 1000000,
                                             2000 + inst);
    worst = std::max(worst, oracle::rel_err(exact_w, mc_w));
  }
  return Criterion{3, worst < 0.02, "worst relative deviation " + fmt(worst) + " over 40 checks"};
}

// ---------------------------------------------------------------------------
// Criterion 4: boundedness of the loss and of certificates.
// ---------------------------------------------------------------------------

Criterion criterion_boundedness() {
  bool pass = true;
  std::string detail;
  for (std::uint64_t seed = 0; seed < 1000 && pass; ++seed) {
    VaeModel model = random_small_model(seed, 1.2);
    Tensor x = random_binary(1, 5, seed + 5000);
    LossConfig cfg{5e-3, 1};
    RngStream r(seed);
    const double loss = reconstruction_loss(model, x, cfg, r).data[0];
    if (!(loss >= 0.0 && loss <= 1.0)) {
      pass = false;
      detail = "loss " + fmt(loss) + " out of range at seed " + std::to_string(seed);
    }
  }
  // Certificates on random small models: risk in [R-hat, 1].
  for (std::uint64_t seed = 0; seed < 50 && pass; ++seed) {
    VaeModel model = random_small_model(seed + 100, 0.8);
    VaeModel prior_model = random_small_model(seed + 200, 0.8);
    WeightPrior prior{prior_model.phi, prior_model.theta, 0.02, 0.02};
    ImageDataset bound;
    bound.count = 64;
    bound.dim = 5;
    bound.examples.resize(64 * 5);
    RngStream dr(seed);
    for (auto& b : bound.examples) b = dr.next_uniform() < 0.5 ? 0 : 1;
    PacBayesConfig cfg;
    cfg.delta = 0.05;
    cfg.n_bound = 64;
    cfg.loss = LossConfig{5e-3, 1};
    for (auto mode : {CertificateMode::perturbed, CertificateMode::small_noise_approx}) {
      Certificate cert = evaluate_certificate(model, prior, bound, cfg, mode, seed);
      if (!(cert.risk_bound >= cert.empirical_loss && cert.risk_bound <= 1.0)) {
        pass = false;
        detail = "certificate out of range at seed " + std::to_string(seed);
      }
    }
  }
  if (pass) detail = "1000 loss draws in [0,1]; 100 certificates in [R-hat, 1]";
  return Criterion{4, pass, detail};
}

// ---------------------------------------------------------------------------
// Criterion 5: budget consistency over noise draws.
// ---------------------------------------------------------------------------

Criterion criterion_budget_consistency() {
  RngStream rng(51);
  ParamVector phi, phi0, theta, theta0;
  phi.layers.push_back({Tensor({6, 1}, {0.12, -0.05, 0.2, 0.08, -0.11, 0.03}), Tensor({0}, {})});
  phi0.layers.push_back({Tensor({6, 1}, {0.0, 0.0, 0.1, 0.0, -0.05, 0.0}), Tensor({0}, {})});
  theta.layers.push_back({Tensor({4, 1}, {-0.3, 0.22, 0.05, 0.0}), Tensor({0}, {})});
  theta0.layers.push_back({Tensor({4, 1}, {-0.25, 0.3, 0.0, 0.02}), Tensor({0}, {})});
  WeightPrior prior{phi0, theta0, 0.05, 0.07};
  const std::size_t n = 500;
  const double delta = 0.05;

  const int draws = 10000;
  double mean = 0.0;
  double m2 = 0.0;
  for (int k = 0; k < draws; ++k) {
    ParamVector eps_phi = zeros_like(phi);
    for (double& v : eps_phi.layers[0].weight.data) v = prior.sigma_phi * rng.next_gaussian();
    ParamVector eps_theta = zeros_like(theta);
    for (double& v : eps_theta.layers[0].weight.data) v = prior.sigma_theta * rng.next_gaussian();
    const double b = derandomised_budget(phi, theta, prior, eps_phi, eps_theta, n, delta);
    const double prev = mean;
    mean += (b - mean) / (k + 1);
    m2 += (b - prev) * (b - mean);
  }
  const double se = std::sqrt(m2 / (draws - 1) / draws);
  const double expected = noise_free_budget(phi, theta, prior, n, delta) +
                          std::log(2.0 * std::sqrt(static_cast<double>(n)) / delta) /
                              (2.0 * static_cast<double>(n));
  const double dev = std::abs(mean - expected);
  return Criterion{5, dev < 3.0 * se,
                   "|mean - expected| = " + fmt(dev) + " vs 3 se = " + fmt(3.0 * se)};
}

// ---------------------------------------------------------------------------
// Criteria 6-8: desk-scale MNIST runs.
// ---------------------------------------------------------------------------

ExperimentConfig desk_config(const std::string& data_dir, const std::string& out_root,
                             std::uint64_t seed) {
  ExperimentConfig cfg;
  cfg.train_images = data_dir + "/train-images-idx3-ubyte.gz";
  cfg.test_images = data_dir + "/t10k-images-idx3-ubyte.gz";
  cfg.train_limit = 10000;
  cfg.prior_fraction = 0.5;
  cfg.split_seed = 7;
  cfg.input_dim = 784;
  cfg.latent_dim = 8;
  cfg.hidden = {128, 128};
  cfg.p_min = 5e-3;
  cfg.prior_scheme = PriorScheme::beta_vae;
  cfg.prior_beta = 0.1;
  cfg.prior_dropout = 0.2;
  cfg.prior_epochs = 50;
  cfg.objective = ObjectiveKind::pb_mcallester;
  cfg.beta = 0.1;  // baseline beta-VAE weight for the paired runs
  cfg.sigma_phi = 0.01;
  cfg.sigma_theta = 0.01;
  cfg.lambda = 1.0;
  cfg.epochs = 50;
  cfg.batch_size = 100;
  cfg.learning_rate = 1e-3;
  cfg.delta = 0.05;
  cfg.cert_mc_samples = 4;
  cfg.randomised_samples = 4;
  cfg.master_seed = seed;
  cfg.certificate_seed = 90 + seed;
  cfg.out_dir = out_root;
  return cfg;
}

// Pipeline steps with artifact reuse, so acceptance re-runs are incremental.
std::string ensure_prior(const ExperimentConfig& cfg) {
  const std::string path = cfg.out_dir + "/prior.ckpt";
  if (!fs::exists(path)) {
    progress("training prior -> " + cfg.out_dir);
    (void)cmd_train_prior(cfg);
  }
  return path;
}

std::string ensure_posterior(const ExperimentConfig& cfg, const std::string& prior_path) {
  const std::string path = cfg.out_dir + "/posterior.ckpt";
  if (!fs::exists(path)) {
    progress("training posterior (" + objective_name(cfg.objective) +
             ", lambda " + fmt(cfg.lambda) + ") -> " + cfg.out_dir);
    (void)cmd_train(cfg, prior_path);
  }
  return path;
}

nlohmann::json ensure_report(const ExperimentConfig& cfg, const std::string& posterior_path,
                             const std::string& prior_path) {
  const std::string path = cfg.out_dir + "/report.json";
  if (!fs::exists(path)) {
    progress("certifying -> " + cfg.out_dir);
    (void)cmd_certify(cfg, posterior_path, prior_path);
  }
  std::ifstream in(path);
  nlohmann::json rep;
  in >> rep;
  return rep;
}

struct DeskRun {
  nlohmann::json pb_report;       // pb_mcallester, lambda = 1
  nlohmann::json bvae_report;     // beta-VAE baseline, beta = 0.1
  double dist_lambda1 = 0.0;      // ||phi - phi0|| after lambda = 1 training
  double dist_lambda_small = 0.0; // after lambda = 1e-4 training
};

DeskRun run_desk_seed(const std::string& data_dir, const std::string& out_root,
                      std::uint64_t seed) {
  DeskRun run;
  ExperimentConfig base = desk_config(data_dir, out_root + "/seed" + std::to_string(seed), seed);

  ExperimentConfig prior_cfg = base;
  prior_cfg.out_dir = base.out_dir + "/prior";
  const std::string prior_path = ensure_prior(prior_cfg);
  Checkpoint prior_ckpt = load_checkpoint(prior_path);

  ExperimentConfig pb = base;
  pb.out_dir = base.out_dir + "/pb_lambda1";
  const std::string pb_path = ensure_posterior(pb, prior_path);
  run.pb_report = ensure_report(pb, pb_path, prior_path);
  run.dist_lambda1 =
      std::sqrt(param_squared_distance(load_checkpoint(pb_path).phi, prior_ckpt.phi));

  ExperimentConfig bvae = base;
  bvae.objective = ObjectiveKind::beta_vae;
  bvae.out_dir = base.out_dir + "/bvae";
  const std::string bvae_path = ensure_posterior(bvae, prior_path);
  run.bvae_report = ensure_report(bvae, bvae_path, prior_path);

  ExperimentConfig loose = base;
  loose.lambda = 1e-4;
  loose.out_dir = base.out_dir + "/pb_lambda_small";
  const std::string loose_path = ensure_posterior(loose, prior_path);
  run.dist_lambda_small =
      std::sqrt(param_squared_distance(load_checkpoint(loose_path).phi, prior_ckpt.phi));
  return run;
}

nlohmann::json find_certificate(const nlohmann::json& report, const std::string& kind,
                                const std::string& mode) {
  for (const auto& cert : report["certificates"]) {
    if (cert["kind"] == kind && cert["mode"] == mode) return cert;
  }
  throw std::runtime_error("report missing certificate " + kind + "/" + mode);
}

Criterion criterion_non_vacuity(const DeskRun& seed1, double elapsed) {
  const auto cert = find_certificate(seed1.pb_report, "derandomised", "perturbed");
  const double risk = cert["risk_bound"].get<double>();
  const double test_bounded = seed1.pb_report["test_recon_bounded"].get<double>();
  const bool pass = risk < 1.0 && risk <= 3.0 * test_bounded;
  return Criterion{6, pass,
                   "risk_bound " + fmt(risk) + " vs test bounded loss " + fmt(test_bounded) +
                       " (ratio " + fmt(risk / test_bounded) + "), " + fmt(elapsed) + " s"};
}

Criterion criterion_gap_ordering(const std::vector<DeskRun>& runs) {
  double pb_mean = 0.0;
  double bvae_mean = 0.0;
  int seed_failures = 0;
  std::string per_seed;
  for (const auto& run : runs) {
    const double pb_gap = run.pb_report["gap_raw"].get<double>();
    const double bvae_gap = run.bvae_report["gap_raw"].get<double>();
    pb_mean += pb_gap / static_cast<double>(runs.size());
    bvae_mean += bvae_gap / static_cast<double>(runs.size());
    if (pb_gap > bvae_gap) ++seed_failures;
    per_seed += " [" + fmt(pb_gap) + " vs " + fmt(bvae_gap) + "]";
  }
  const bool mean_ok = pb_mean <= bvae_mean;
  // Soft criterion: one seed out of three flipping triggers investigation,
  // not rejection; the mean ordering is the gate.
  const bool pass = mean_ok && seed_failures <= 1;
  std::string detail = "mean gap pb " + fmt(pb_mean) + " vs beta-vae " + fmt(bvae_mean) +
                       "; per-seed (pb vs bvae):" + per_seed;
  if (seed_failures == 1) detail += "; soft warning: 1 of 3 seeds flipped";
  return Criterion{7, pass, detail};
}

Criterion criterion_lambda_attenuation(const std::vector<DeskRun>& runs) {
  bool pass = true;
  std::string detail = "||phi-phi0|| lambda=1e-4 vs lambda=1:";
  for (const auto& run : runs) {
    detail += " [" + fmt(run.dist_lambda_small) + " vs " + fmt(run.dist_lambda1) + "]";
    if (run.dist_lambda_small <= run.dist_lambda1) pass = false;
  }
  return Criterion{8, pass, detail};
}

// ---------------------------------------------------------------------------
// Criterion 9: end-to-end reproducibility.
// ---------------------------------------------------------------------------

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Criterion criterion_reproducibility(const std::string& data_dir, const std::string& out_root) {
  ExperimentConfig cfg = desk_config(data_dir, out_root + "/repro1", 5);
  cfg.train_limit = 500;
  cfg.prior_epochs = 3;
  cfg.epochs = 3;
  cfg.randomised_samples = 2;
  fs::remove_all(cfg.out_dir);
  RunReport r1 = run_pipeline(cfg);
  cfg.out_dir = out_root + "/repro2";
  fs::remove_all(cfg.out_dir);
  RunReport r2 = run_pipeline(cfg);

  const bool certs_equal = slurp(out_root + "/repro1/certificates.json") ==
                           slurp(out_root + "/repro2/certificates.json");
  const bool logs_equal = slurp(out_root + "/repro1/train_log.jsonl") ==
                              slurp(out_root + "/repro2/train_log.jsonl") &&
                          slurp(out_root + "/repro1/prior_log.jsonl") ==
                              slurp(out_root + "/repro2/prior_log.jsonl");
  auto j1 = nlohmann::json::parse(run_report_to_json(r1));
  auto j2 = nlohmann::json::parse(run_report_to_json(r2));
  j1.erase("wall_clock_s");
  j2.erase("wall_clock_s");
  const bool reports_equal = j1 == j2;
  return Criterion{9, certs_equal && logs_equal && reports_equal,
                   std::string("certificates ") + (certs_equal ? "identical" : "DIFFER") +
                       ", logs " + (logs_equal ? "identical" : "DIFFER") + ", reports " +
                       (reports_equal ? "identical" : "DIFFER")};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"pbvae acceptance suite"};
  std::string data_dir = "data/mnist";
  std::string out_dir = "acceptance_work";
  std::vector<int> only;
  app.add_option("--data-dir", data_dir, "Directory with the MNIST IDX files");
  app.add_option("--out-dir", out_dir, "Working directory for desk-scale artifacts");
  app.add_option("--only", only, "Run only these criterion ids");
  CLI11_PARSE(app, argc, argv);

  auto wanted = [&](int id) {
    return only.empty() || std::find(only.begin(), only.end(), id) != only.end();
  };

  std::vector<Criterion> results;
  try {
    if (wanted(1)) results.push_back(criterion_gradients());
    if (wanted(2)) results.push_back(criterion_kl_inversion());
    if (wanted(3)) results.push_back(criterion_mc_kl());
    if (wanted(4)) results.push_back(criterion_boundedness());
    if (wanted(5)) results.push_back(criterion_budget_consistency());

    if (wanted(6) || wanted(7) || wanted(8)) {
      const auto t0 = std::chrono::steady_clock::now();
      std::vector<DeskRun> runs;
      for (std::uint64_t seed : {1ULL, 2ULL, 3ULL}) {
        progress("desk-scale seed " + std::to_string(seed));
        runs.push_back(run_desk_seed(data_dir, out_dir, seed));
      }
      const double elapsed = seconds_since(t0);
      if (wanted(6)) results.push_back(criterion_non_vacuity(runs[0], elapsed));
      if (wanted(7)) results.push_back(criterion_gap_ordering(runs));
      if (wanted(8)) results.push_back(criterion_lambda_attenuation(runs));
    }

    if (wanted(9)) results.push_back(criterion_reproducibility(data_dir, out_dir));
  } catch (const std::exception& e) {
    std::printf("[FAIL] acceptance aborted: %s\n", e.what());
    return 99;
  }

  int failures = 0;
  for (const auto& c : results) {
    std::printf("[%s] criterion %d: %s\n", c.pass ? "PASS" : "FAIL", c.id, c.detail.c_str());
    if (!c.pass) ++failures;
  }
  return failures;
}
