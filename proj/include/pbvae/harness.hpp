#ifndef PBVAE_HARNESS_HPP
#define PBVAE_HARNESS_HPP

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "pbvae/certificate.hpp"
#include "pbvae/dataset.hpp"
#include "pbvae/pacbayes.hpp"
#include "pbvae/vae.hpp"

namespace pbvae {

enum class PriorScheme { beta_vae, zero, random };
enum class ObjectiveKind { beta_vae, pb_mcallester, pb_quadratic };

std::string prior_scheme_name(PriorScheme s);
std::string objective_name(ObjectiveKind o);
PriorScheme parse_prior_scheme(const std::string& s);
ObjectiveKind parse_objective(const std::string& s);

// Every run is fully reconstructable from this config plus its seeds.
struct ExperimentConfig {
  // [data]
  std::string train_images;
  std::string test_images;
  double binarise_threshold = 127.5;
  std::size_t train_limit = 10000;  // 0 = use all images
  double prior_fraction = 0.5;
  std::uint64_t split_seed = 7;

  // [model]
  std::size_t input_dim = 784;  // used by data-free prior schemes; validated against data
  std::size_t latent_dim = 8;
  std::vector<std::size_t> hidden = {128, 128};
  double p_min = 5e-3;

  // [prior]
  PriorScheme prior_scheme = PriorScheme::beta_vae;
  double prior_beta = 0.1;
  double prior_dropout = 0.2;
  std::size_t prior_epochs = 50;

  // [train]
  ObjectiveKind objective = ObjectiveKind::pb_mcallester;
  double beta = 1.0;  // baseline beta-VAE objective weight
  double sigma_phi = 0.01;
  double sigma_theta = 0.01;
  double lambda = 1.0;
  std::size_t epochs = 50;
  std::size_t batch_size = 100;
  double learning_rate = 1e-3;
  std::size_t mc_samples = 1;
  std::size_t weight_noise_samples = 1;
  std::string train_data = "full";  // full | bound

  // [certificate]
  double delta = 0.05;
  std::size_t cert_mc_samples = 4;
  std::size_t randomised_samples = 10;

  // [run]
  std::uint64_t master_seed = 1;
  std::uint64_t certificate_seed = 99;
  std::string out_dir = "out";
};

// Flat key-value config file with [section] headers; '#' and ';' comments.
std::map<std::string, std::string> parse_ini(const std::string& text);
std::map<std::string, std::string> read_ini_file(const std::string& path);
ExperimentConfig config_from_map(const std::map<std::string, std::string>& kv);
ExperimentConfig load_config(const std::string& path);
std::map<std::string, std::string> config_to_map(const ExperimentConfig& cfg);
std::string config_hash(const ExperimentConfig& cfg);
void write_resolved_config(const ExperimentConfig& cfg, const std::string& path);

struct RunReport {
  std::string config_hash;
  double train_recon_raw = 0.0;      // nats/image at the posterior weights
  double test_recon_raw = 0.0;
  double train_recon_bounded = 0.0;
  double test_recon_bounded = 0.0;
  double gap_raw = 0.0;              // test - train, exactly as emitted
  std::size_t n_bound = 0;
  std::vector<Certificate> certificates;
  bool has_randomised = false;
  RandomisedReport randomised;
  double wall_clock_s = 0.0;
};

std::string run_report_to_json(const RunReport& report);

// Minibatch Adam on the beta-VAE objective; shares the epoch-shuffle
// derivation with train_posterior so paired runs see identical data order.
TrainLog train_beta_vae(VaeModel& model, const ImageDataset& dataset, double beta,
                        double dropout_rate, const LossConfig& loss,
                        const TrainOptions& opts, RngStream& rng);

// Loads, binarises and prefixes the configured training images.
ImageDataset load_train_set(const ExperimentConfig& cfg);
ImageDataset load_test_set(const ExperimentConfig& cfg);

// Pipeline steps. Each returns the path of its main artifact.
std::string cmd_train_prior(const ExperimentConfig& cfg);
std::string cmd_train(const ExperimentConfig& cfg, const std::string& prior_ckpt_path);
RunReport cmd_certify(const ExperimentConfig& cfg, const std::string& posterior_ckpt_path,
                      const std::string& prior_ckpt_path);

// Convenience: train-prior + train + certify into cfg.out_dir.
RunReport run_pipeline(const ExperimentConfig& cfg);

struct SweepGrid {
  std::vector<double> beta;            // prior beta for PB runs, objective beta for baselines
  std::vector<double> sigma;           // applied to both sigma_phi and sigma_theta
  std::vector<double> lambda;
  std::vector<ObjectiveKind> objective;
  std::vector<PriorScheme> prior_scheme;
  std::vector<std::uint64_t> seeds;
};

SweepGrid sweep_grid_from_map(const std::map<std::string, std::string>& kv,
                              const ExperimentConfig& base);

// One row per grid point, deterministic order, resumable by config hash.
// Failed rows are recorded and the sweep continues. Returns the CSV path.
std::string cmd_sweep(const ExperimentConfig& base, const SweepGrid& grid);

}  // namespace pbvae

#endif  // PBVAE_HARNESS_HPP
