#include "pbvae/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "pbvae/checkpoint.hpp"
#include "pbvae/errors.hpp"

namespace fs = std::filesystem;

namespace pbvae {

namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r\n");
  return s.substr(begin, end - begin + 1);
}

std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string fmt_sizes(const std::vector<std::size_t>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(v[i]);
  }
  return out;
}

double get_double(const std::map<std::string, std::string>& kv, const std::string& key,
                  double fallback) {
  auto it = kv.find(key);
  return it == kv.end() ? fallback : std::stod(it->second);
}

std::size_t get_size(const std::map<std::string, std::string>& kv, const std::string& key,
                     std::size_t fallback) {
  auto it = kv.find(key);
  return it == kv.end() ? fallback : static_cast<std::size_t>(std::stoull(it->second));
}

std::uint64_t get_u64(const std::map<std::string, std::string>& kv, const std::string& key,
                      std::uint64_t fallback) {
  auto it = kv.find(key);
  return it == kv.end() ? fallback : std::stoull(it->second);
}

std::string get_str(const std::map<std::string, std::string>& kv, const std::string& key,
                    const std::string& fallback) {
  auto it = kv.find(key);
  return it == kv.end() ? fallback : it->second;
}

void ensure_dir(const std::string& path) {
  std::error_code ec;
  fs::create_directories(path, ec);
  if (ec) throw FormatError("cannot create directory '" + path + "': " + ec.message());
}

void write_train_log(const std::string& path, const TrainLog& log) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write training log '" + path + "'");
  for (const auto& rec : log.records) {
    nlohmann::json j;
    j["epoch"] = rec.epoch;
    j["objective"] = rec.objective;
    j["recon_raw"] = rec.recon_raw;
    j["recon_bounded"] = rec.recon_bounded;
    j["penalty_phi"] = rec.penalty_phi;
    j["penalty_theta"] = rec.penalty_theta;
    j["s_phi"] = rec.s_phi;
    j["s_theta"] = rec.s_theta;
    out << j.dump() << '\n';
  }
  if (log.diverged) {
    out << nlohmann::json{{"diverged", true}}.dump() << '\n';
  }
}

ImageDataset load_binarised(const std::string& path, double threshold, SplitTag tag) {
  IdxData raw = load_idx(path, kIdxImagesMagic);
  ImageDataset ds = binarise(raw, threshold, fs::path(path).filename().string());
  ds.split_tag = tag;
  return ds;
}

// Keys that determine the prior checkpoint; used to share priors across
// sweep rows that only differ downstream.
std::map<std::string, std::string> prior_relevant_map(const ExperimentConfig& cfg) {
  auto kv = config_to_map(cfg);
  std::map<std::string, std::string> out;
  for (const auto& [k, v] : kv) {
    if (k.rfind("data.", 0) == 0 || k.rfind("model.", 0) == 0 || k.rfind("prior.", 0) == 0 ||
        k == "run.master_seed") {
      out.emplace(k, v);
    }
  }
  return out;
}

std::string map_hash(const std::map<std::string, std::string>& kv) {
  std::string canonical;
  for (const auto& [k, v] : kv) {
    canonical += k;
    canonical += '=';
    canonical += v;
    canonical += '\n';
  }
  return bytes_hash(canonical);
}

void validate_arch(const ExperimentConfig& cfg, const Checkpoint& ckpt,
                   const std::string& role) {
  if (ckpt.latent_dim != cfg.latent_dim || ckpt.hidden != cfg.hidden ||
      (cfg.input_dim != 0 && ckpt.input_dim != cfg.input_dim)) {
    throw ContractError(role + " checkpoint architecture does not match the config");
  }
}

nlohmann::json certificate_json_obj(const Certificate& cert) {
  return nlohmann::json::parse(certificate_to_json(cert));
}

}  // namespace

std::string prior_scheme_name(PriorScheme s) {
  switch (s) {
    case PriorScheme::beta_vae: return "beta_vae";
    case PriorScheme::zero: return "zero";
    case PriorScheme::random: return "random";
  }
  return "unknown";
}

std::string objective_name(ObjectiveKind o) {
  switch (o) {
    case ObjectiveKind::beta_vae: return "beta_vae";
    case ObjectiveKind::pb_mcallester: return "pb_mcallester";
    case ObjectiveKind::pb_quadratic: return "pb_quadratic";
  }
  return "unknown";
}

PriorScheme parse_prior_scheme(const std::string& s) {
  if (s == "beta_vae") return PriorScheme::beta_vae;
  if (s == "zero") return PriorScheme::zero;
  if (s == "random") return PriorScheme::random;
  throw FormatError("unknown prior scheme '" + s + "'");
}

ObjectiveKind parse_objective(const std::string& s) {
  if (s == "beta_vae") return ObjectiveKind::beta_vae;
  if (s == "pb_mcallester") return ObjectiveKind::pb_mcallester;
  if (s == "pb_quadratic") return ObjectiveKind::pb_quadratic;
  throw FormatError("unknown objective '" + s + "'");
}

std::map<std::string, std::string> parse_ini(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::string section;
  std::stringstream ss(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(ss, line)) {
    ++line_no;
    const auto comment = line.find_first_of("#;");
    if (comment != std::string::npos) line = line.substr(0, comment);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') {
        throw FormatError("config line " + std::to_string(line_no) + ": bad section header");
      }
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw FormatError("config line " + std::to_string(line_no) + ": expected key = value");
    }
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (!section.empty()) key = section + "." + key;
    kv[key] = value;
  }
  return kv;
}

std::map<std::string, std::string> read_ini_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open config '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_ini(ss.str());
}

ExperimentConfig config_from_map(const std::map<std::string, std::string>& kv) {
  ExperimentConfig cfg;
  cfg.train_images = get_str(kv, "data.train_images", cfg.train_images);
  cfg.test_images = get_str(kv, "data.test_images", cfg.test_images);
  cfg.binarise_threshold = get_double(kv, "data.binarise_threshold", cfg.binarise_threshold);
  cfg.train_limit = get_size(kv, "data.train_limit", cfg.train_limit);
  cfg.prior_fraction = get_double(kv, "data.prior_fraction", cfg.prior_fraction);
  cfg.split_seed = get_u64(kv, "data.split_seed", cfg.split_seed);

  cfg.input_dim = get_size(kv, "model.input_dim", cfg.input_dim);
  cfg.latent_dim = get_size(kv, "model.latent_dim", cfg.latent_dim);
  if (kv.count("model.hidden")) {
    cfg.hidden.clear();
    for (const auto& tok : split_csv(kv.at("model.hidden"))) {
      cfg.hidden.push_back(std::stoull(tok));
    }
  }
  cfg.p_min = get_double(kv, "model.p_min", cfg.p_min);

  cfg.prior_scheme = parse_prior_scheme(get_str(kv, "prior.scheme", prior_scheme_name(cfg.prior_scheme)));
  cfg.prior_beta = get_double(kv, "prior.beta", cfg.prior_beta);
  cfg.prior_dropout = get_double(kv, "prior.dropout", cfg.prior_dropout);
  cfg.prior_epochs = get_size(kv, "prior.epochs", cfg.prior_epochs);

  cfg.objective = parse_objective(get_str(kv, "train.objective", objective_name(cfg.objective)));
  cfg.beta = get_double(kv, "train.beta", cfg.beta);
  cfg.sigma_phi = get_double(kv, "train.sigma_phi", cfg.sigma_phi);
  cfg.sigma_theta = get_double(kv, "train.sigma_theta", cfg.sigma_theta);
  cfg.lambda = get_double(kv, "train.lambda", cfg.lambda);
  cfg.epochs = get_size(kv, "train.epochs", cfg.epochs);
  cfg.batch_size = get_size(kv, "train.batch_size", cfg.batch_size);
  cfg.learning_rate = get_double(kv, "train.learning_rate", cfg.learning_rate);
  cfg.mc_samples = get_size(kv, "train.mc_samples", cfg.mc_samples);
  cfg.weight_noise_samples = get_size(kv, "train.weight_noise_samples", cfg.weight_noise_samples);
  cfg.train_data = get_str(kv, "train.data", cfg.train_data);
  if (cfg.train_data != "full" && cfg.train_data != "bound") {
    throw FormatError("train.data must be 'full' or 'bound'");
  }

  cfg.delta = get_double(kv, "certificate.delta", cfg.delta);
  cfg.cert_mc_samples = get_size(kv, "certificate.mc_samples", cfg.cert_mc_samples);
  cfg.randomised_samples = get_size(kv, "certificate.randomised_samples", cfg.randomised_samples);

  cfg.master_seed = get_u64(kv, "run.master_seed", cfg.master_seed);
  cfg.certificate_seed = get_u64(kv, "run.certificate_seed", cfg.certificate_seed);
  cfg.out_dir = get_str(kv, "run.out_dir", cfg.out_dir);
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  return config_from_map(read_ini_file(path));
}

std::map<std::string, std::string> config_to_map(const ExperimentConfig& cfg) {
  std::map<std::string, std::string> kv;
  kv["data.train_images"] = cfg.train_images;
  kv["data.test_images"] = cfg.test_images;
  kv["data.binarise_threshold"] = fmt_double(cfg.binarise_threshold);
  kv["data.train_limit"] = std::to_string(cfg.train_limit);
  kv["data.prior_fraction"] = fmt_double(cfg.prior_fraction);
  kv["data.split_seed"] = std::to_string(cfg.split_seed);
  kv["model.input_dim"] = std::to_string(cfg.input_dim);
  kv["model.latent_dim"] = std::to_string(cfg.latent_dim);
  kv["model.hidden"] = fmt_sizes(cfg.hidden);
  kv["model.p_min"] = fmt_double(cfg.p_min);
  kv["prior.scheme"] = prior_scheme_name(cfg.prior_scheme);
  kv["prior.beta"] = fmt_double(cfg.prior_beta);
  kv["prior.dropout"] = fmt_double(cfg.prior_dropout);
  kv["prior.epochs"] = std::to_string(cfg.prior_epochs);
  kv["train.objective"] = objective_name(cfg.objective);
  kv["train.beta"] = fmt_double(cfg.beta);
  kv["train.sigma_phi"] = fmt_double(cfg.sigma_phi);
  kv["train.sigma_theta"] = fmt_double(cfg.sigma_theta);
  kv["train.lambda"] = fmt_double(cfg.lambda);
  kv["train.epochs"] = std::to_string(cfg.epochs);
  kv["train.batch_size"] = std::to_string(cfg.batch_size);
  kv["train.learning_rate"] = fmt_double(cfg.learning_rate);
  kv["train.mc_samples"] = std::to_string(cfg.mc_samples);
  kv["train.weight_noise_samples"] = std::to_string(cfg.weight_noise_samples);
  kv["train.data"] = cfg.train_data;
  kv["certificate.delta"] = fmt_double(cfg.delta);
  kv["certificate.mc_samples"] = std::to_string(cfg.cert_mc_samples);
  kv["certificate.randomised_samples"] = std::to_string(cfg.randomised_samples);
  kv["run.master_seed"] = std::to_string(cfg.master_seed);
  kv["run.certificate_seed"] = std::to_string(cfg.certificate_seed);
  // out_dir deliberately excluded: moving outputs must not change the hash.
  return kv;
}

std::string config_hash(const ExperimentConfig& cfg) {
  return map_hash(config_to_map(cfg));
}

void write_resolved_config(const ExperimentConfig& cfg, const std::string& path) {
  auto kv = config_to_map(cfg);
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write resolved config '" + path + "'");
  std::string section;
  for (const auto& [key, value] : kv) {
    const auto dot = key.find('.');
    const std::string sec = key.substr(0, dot);
    if (sec != section) {
      if (!section.empty()) out << '\n';
      out << '[' << sec << "]\n";
      section = sec;
    }
    out << key.substr(dot + 1) << " = " << value << '\n';
  }
  out << "\n[run]\nout_dir = " << cfg.out_dir << '\n';
}

std::string run_report_to_json(const RunReport& report) {
  nlohmann::json j;
  j["config_hash"] = report.config_hash;
  j["train_recon_raw"] = report.train_recon_raw;
  j["test_recon_raw"] = report.test_recon_raw;
  j["train_recon_bounded"] = report.train_recon_bounded;
  j["test_recon_bounded"] = report.test_recon_bounded;
  j["gap_raw"] = report.gap_raw;
  j["n_bound"] = report.n_bound;
  j["certificates"] = nlohmann::json::array();
  for (const auto& cert : report.certificates) {
    j["certificates"].push_back(certificate_json_obj(cert));
  }
  if (report.has_randomised) {
    nlohmann::json r;
    r["mc_loss"] = report.randomised.mc_loss;
    r["kl_total"] = report.randomised.kl_total;
    r["mcallester_bound"] = report.randomised.mcallester_bound;
    r["quadratic_bound"] = report.randomised.quadratic_bound;
    r["m_samples"] = report.randomised.m_samples;
    r["s_clamped"] = report.randomised.s_clamped;
    r["flag"] = report.randomised.flag;
    j["randomised_diagnostic"] = r;
  }
  j["wall_clock_s"] = report.wall_clock_s;
  return j.dump(2);
}

TrainLog train_beta_vae(VaeModel& model, const ImageDataset& dataset, double beta,
                        double dropout_rate, const LossConfig& loss,
                        const TrainOptions& opts, RngStream& rng) {
  TrainLog log;
  AdamState adam_phi = make_adam_state(model.phi, opts.learning_rate);
  AdamState adam_theta = make_adam_state(model.theta, opts.learning_rate);
  VaeModel snapshot = model;
  std::size_t global_step = 0;

  for (std::size_t epoch = 0; epoch < opts.epochs; ++epoch) {
    Minibatches batches(dataset, opts.batch_size, epoch_shuffle_seed(rng, epoch));
    EpochRecord rec;
    rec.epoch = epoch;
    const double inv_b = 1.0 / static_cast<double>(batches.batch_count());

    for (std::size_t b = 0; b < batches.batch_count(); ++b, ++global_step) {
      Tensor batch = batches.batch(b);
      RngStream step_rng = rng.substream(StreamId::scratch, global_step);
      BetaVaeResult res =
          beta_vae_objective(model, batch, beta, loss, step_rng, dropout_rate, true);
      if (!std::isfinite(res.value) || !param_all_finite(res.grad_phi) ||
          !param_all_finite(res.grad_theta)) {
        model = snapshot;
        log.diverged = true;
        return log;
      }
      adam_step(model.phi, res.grad_phi, adam_phi);
      adam_step(model.theta, res.grad_theta, adam_theta);
      rec.objective += inv_b * res.value;
      rec.recon_raw += inv_b * res.recon_nll;
      rec.recon_bounded += inv_b * res.recon_bounded;
    }
    log.records.push_back(rec);
    snapshot = model;
  }
  return log;
}

ImageDataset load_train_set(const ExperimentConfig& cfg) {
  if (cfg.train_images.empty()) throw ContractError("data.train_images is not set");
  ImageDataset ds = load_binarised(cfg.train_images, cfg.binarise_threshold, SplitTag::train);
  ds = take_prefix(ds, cfg.train_limit);
  if (cfg.input_dim != 0 && ds.dim != cfg.input_dim) {
    throw ContractError("training images have dimension " + std::to_string(ds.dim) +
                        " but model.input_dim is " + std::to_string(cfg.input_dim));
  }
  return ds;
}

ImageDataset load_test_set(const ExperimentConfig& cfg) {
  if (cfg.test_images.empty()) throw ContractError("data.test_images is not set");
  return load_binarised(cfg.test_images, cfg.binarise_threshold, SplitTag::test);
}

std::string cmd_train_prior(const ExperimentConfig& cfg) {
  ensure_dir(cfg.out_dir);
  write_resolved_config(cfg, cfg.out_dir + "/config.resolved.ini");
  const std::string hash = config_hash(cfg);
  const std::string path = cfg.out_dir + "/prior.ckpt";

  RngStream master(cfg.master_seed);
  VaeModel model;

  if (cfg.prior_scheme == PriorScheme::beta_vae) {
    if (cfg.train_images.empty()) {
      throw ContractError("prior.scheme = beta_vae requires data.train_images");
    }
    ImageDataset train = load_train_set(cfg);
    auto [prior_set, bound_set] = split(train, SplitSpec{cfg.prior_fraction, cfg.split_seed});
    if (prior_set.count == 0) {
      throw ContractError("prior.scheme = beta_vae requires a nonempty prior split");
    }
    model = make_vae_model(train.dim, cfg.latent_dim, cfg.hidden,
                           InitScheme::clamped_normal, master);
    LossConfig loss{cfg.p_min, cfg.mc_samples};
    TrainOptions opts{cfg.prior_epochs, cfg.batch_size, cfg.learning_rate};
    RngStream train_rng = master.substream(StreamId::scratch, 1);
    TrainLog log = train_beta_vae(model, prior_set, cfg.prior_beta, cfg.prior_dropout,
                                  loss, opts, train_rng);
    write_train_log(cfg.out_dir + "/prior_log.jsonl", log);
  } else {
    const InitScheme scheme = cfg.prior_scheme == PriorScheme::zero
                                  ? InitScheme::zero
                                  : InitScheme::clamped_normal;
    model = make_vae_model(cfg.input_dim, cfg.latent_dim, cfg.hidden, scheme, master);
  }

  Checkpoint ckpt = make_checkpoint("prior", model, cfg.master_seed);
  ckpt.config_hash = hash;
  save_checkpoint(path, ckpt);
  return path;
}

std::string cmd_train(const ExperimentConfig& cfg, const std::string& prior_ckpt_path) {
  ensure_dir(cfg.out_dir);
  const std::string hash = config_hash(cfg);
  const std::string path = cfg.out_dir + "/posterior.ckpt";

  Checkpoint prior_ckpt = load_checkpoint(prior_ckpt_path);
  validate_arch(cfg, prior_ckpt, "prior");
  VaeModel model = model_from_checkpoint(prior_ckpt);

  ImageDataset train = load_train_set(cfg);
  auto [prior_set, bound_set] = split(train, SplitSpec{cfg.prior_fraction, cfg.split_seed});
  const ImageDataset& train_data = cfg.train_data == "bound" ? bound_set : train;

  RngStream master(cfg.master_seed);
  RngStream train_rng = master.substream(StreamId::scratch, 2);
  TrainOptions opts{cfg.epochs, cfg.batch_size, cfg.learning_rate};
  LossConfig loss{cfg.p_min, cfg.mc_samples};

  Checkpoint out_ckpt;
  if (cfg.objective == ObjectiveKind::beta_vae) {
    TrainLog log = train_beta_vae(model, train_data, cfg.beta, 0.0, loss, opts, train_rng);
    write_train_log(cfg.out_dir + "/train_log.jsonl", log);
    out_ckpt = make_checkpoint("posterior", model, cfg.master_seed);
  } else {
    WeightPrior prior{prior_ckpt.phi, prior_ckpt.theta, cfg.sigma_phi, cfg.sigma_theta};
    PosteriorScale scales{std::log(cfg.sigma_phi / 2.0), std::log(cfg.sigma_theta / 2.0)};
    PacBayesConfig pb;
    pb.delta = cfg.delta;
    pb.n_bound = bound_set.count;
    pb.bound_kind = cfg.objective == ObjectiveKind::pb_mcallester ? BoundKind::mcallester
                                                                  : BoundKind::quadratic;
    pb.kl_attenuation = cfg.lambda;
    pb.weight_noise_samples = cfg.weight_noise_samples;
    pb.loss = loss;
    TrainLog log = train_posterior(model, prior, scales, pb, train_data, opts, train_rng);
    write_train_log(cfg.out_dir + "/train_log.jsonl", log);
    out_ckpt = make_checkpoint("posterior", model, cfg.master_seed);
    out_ckpt.rho_phi = scales.rho_phi;
    out_ckpt.rho_theta = scales.rho_theta;
  }
  out_ckpt.config_hash = hash;
  save_checkpoint(path, out_ckpt);
  return path;
}

RunReport cmd_certify(const ExperimentConfig& cfg, const std::string& posterior_ckpt_path,
                      const std::string& prior_ckpt_path) {
  const auto t0 = std::chrono::steady_clock::now();
  ensure_dir(cfg.out_dir);

  Checkpoint prior_ckpt = load_checkpoint(prior_ckpt_path);
  Checkpoint post_ckpt = load_checkpoint(posterior_ckpt_path);
  validate_arch(cfg, prior_ckpt, "prior");
  validate_arch(cfg, post_ckpt, "posterior");
  if (!prior_ckpt.phi.same_layout(post_ckpt.phi) ||
      !prior_ckpt.theta.same_layout(post_ckpt.theta)) {
    throw ContractError("prior and posterior checkpoints have different layouts");
  }

  VaeModel model = model_from_checkpoint(post_ckpt);
  WeightPrior prior{prior_ckpt.phi, prior_ckpt.theta, cfg.sigma_phi, cfg.sigma_theta};

  ImageDataset train = load_train_set(cfg);
  auto [prior_set, bound_set] = split(train, SplitSpec{cfg.prior_fraction, cfg.split_seed});
  ImageDataset test = load_test_set(cfg);
  const ImageDataset& train_eval = cfg.train_data == "bound" ? bound_set : train;

  PacBayesConfig pb;
  pb.delta = cfg.delta;
  pb.n_bound = bound_set.count;
  pb.kl_attenuation = cfg.lambda;
  pb.weight_noise_samples = cfg.weight_noise_samples;
  pb.loss = LossConfig{cfg.p_min, cfg.cert_mc_samples};

  RunReport report;
  report.config_hash = config_hash(cfg);
  report.n_bound = bound_set.count;

  const std::string ckpt_hash = file_hash(posterior_ckpt_path);
  Certificate perturbed = evaluate_certificate(model, prior, bound_set, pb,
                                               CertificateMode::perturbed, cfg.certificate_seed);
  Certificate small_noise =
      evaluate_certificate(model, prior, bound_set, pb, CertificateMode::small_noise_approx,
                           cfg.certificate_seed);
  Certificate noise_free =
      evaluate_noise_free_certificate(model, prior, bound_set, pb, cfg.certificate_seed);
  perturbed.checkpoint_hash = ckpt_hash;
  small_noise.checkpoint_hash = ckpt_hash;
  noise_free.checkpoint_hash = ckpt_hash;
  report.certificates = {perturbed, small_noise, noise_free};

  // Train/test reconstruction at the posterior weights, fixed eval streams.
  const std::uint64_t train_eval_seed =
      RngStream(cfg.certificate_seed).substream(StreamId::scratch, 101).key();
  const std::uint64_t test_eval_seed =
      RngStream(cfg.certificate_seed).substream(StreamId::scratch, 102).key();
  EvalStats train_stats = dataset_losses(model, train_eval, pb.loss, train_eval_seed);
  EvalStats test_stats = dataset_losses(model, test, pb.loss, test_eval_seed);
  report.train_recon_raw = train_stats.mean_nll;
  report.test_recon_raw = test_stats.mean_nll;
  report.train_recon_bounded = train_stats.mean_bounded;
  report.test_recon_bounded = test_stats.mean_bounded;
  report.gap_raw = report.test_recon_raw - report.train_recon_raw;

  if (post_ckpt.rho_phi && post_ckpt.rho_theta && cfg.randomised_samples > 0) {
    PosteriorScale scales{*post_ckpt.rho_phi, *post_ckpt.rho_theta};
    report.randomised = randomised_bound_report(model, prior, scales, bound_set, pb,
                                                cfg.randomised_samples, cfg.certificate_seed);
    report.has_randomised = true;
  }

  const auto t1 = std::chrono::steady_clock::now();
  report.wall_clock_s = std::chrono::duration<double>(t1 - t0).count();

  {
    std::ofstream out(cfg.out_dir + "/certificates.json");
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& cert : report.certificates) arr.push_back(certificate_json_obj(cert));
    out << arr.dump(2) << '\n';
  }
  {
    std::ofstream out(cfg.out_dir + "/report.json");
    out << run_report_to_json(report) << '\n';
  }
  return report;
}

RunReport run_pipeline(const ExperimentConfig& cfg) {
  const std::string prior_path = cmd_train_prior(cfg);
  const std::string posterior_path = cmd_train(cfg, prior_path);
  return cmd_certify(cfg, posterior_path, prior_path);
}

SweepGrid sweep_grid_from_map(const std::map<std::string, std::string>& kv,
                              const ExperimentConfig& base) {
  SweepGrid grid;
  for (const auto& tok : split_csv(get_str(kv, "sweep.beta", fmt_double(base.prior_beta)))) {
    grid.beta.push_back(std::stod(tok));
  }
  for (const auto& tok : split_csv(get_str(kv, "sweep.sigma", fmt_double(base.sigma_phi)))) {
    grid.sigma.push_back(std::stod(tok));
  }
  for (const auto& tok : split_csv(get_str(kv, "sweep.lambda", fmt_double(base.lambda)))) {
    grid.lambda.push_back(std::stod(tok));
  }
  for (const auto& tok : split_csv(get_str(kv, "sweep.objective", objective_name(base.objective)))) {
    grid.objective.push_back(parse_objective(tok));
  }
  for (const auto& tok :
       split_csv(get_str(kv, "sweep.prior_scheme", prior_scheme_name(base.prior_scheme)))) {
    grid.prior_scheme.push_back(parse_prior_scheme(tok));
  }
  for (const auto& tok :
       split_csv(get_str(kv, "sweep.seeds", std::to_string(base.master_seed)))) {
    grid.seeds.push_back(std::stoull(tok));
  }
  return grid;
}

std::string cmd_sweep(const ExperimentConfig& base, const SweepGrid& grid) {
  if (grid.beta.empty() || grid.sigma.empty() || grid.lambda.empty() ||
      grid.objective.empty() || grid.prior_scheme.empty() || grid.seeds.empty()) {
    throw ContractError("sweep: grid must be nonempty in every dimension");
  }
  ensure_dir(base.out_dir);
  const std::string csv_path = base.out_dir + "/sweep.csv";
  std::ofstream csv(csv_path);
  csv << "config_hash,prior_scheme,objective,beta,sigma,lambda,seed,status,"
         "train_raw,test_raw,gap_raw,train_bounded,test_bounded,"
         "risk_perturbed,risk_small_noise,risk_noise_free,risk_perturbed_rescaled,"
         "kl_budget_perturbed,n_bound\n";

  for (PriorScheme scheme : grid.prior_scheme) {
    for (ObjectiveKind objective : grid.objective) {
      for (double beta : grid.beta) {
        for (double sigma : grid.sigma) {
          for (double lambda : grid.lambda) {
            for (std::uint64_t seed : grid.seeds) {
              ExperimentConfig row = base;
              row.prior_scheme = scheme;
              row.objective = objective;
              row.prior_beta = beta;
              row.beta = beta;
              row.sigma_phi = sigma;
              row.sigma_theta = sigma;
              row.lambda = lambda;
              row.master_seed = seed;
              const std::string row_hash = config_hash(row);
              row.out_dir = base.out_dir + "/rows/" + row_hash;

              csv << row_hash << ',' << prior_scheme_name(scheme) << ','
                  << objective_name(objective) << ',' << fmt_double(beta) << ','
                  << fmt_double(sigma) << ',' << fmt_double(lambda) << ',' << seed << ',';
              try {
                const std::string report_path = row.out_dir + "/report.json";
                nlohmann::json rep;
                if (fs::exists(report_path)) {
                  std::ifstream in(report_path);
                  in >> rep;
                } else {
                  // Priors are shared between rows that differ only in
                  // sigma/lambda/objective.
                  ExperimentConfig prior_cfg = row;
                  prior_cfg.out_dir = base.out_dir + "/priors/" + map_hash(prior_relevant_map(row));
                  std::string prior_path = prior_cfg.out_dir + "/prior.ckpt";
                  if (!fs::exists(prior_path)) prior_path = cmd_train_prior(prior_cfg);
                  const std::string posterior_path = cmd_train(row, prior_path);
                  RunReport report = cmd_certify(row, posterior_path, prior_path);
                  rep = nlohmann::json::parse(run_report_to_json(report));
                }
                auto risk_of = [&](const std::string& kind, const std::string& mode) {
                  for (const auto& cert : rep["certificates"]) {
                    if (cert["kind"] == kind && cert["mode"] == mode) return cert;
                  }
                  throw FormatError("report missing certificate " + kind + "/" + mode);
                };
                auto pert = risk_of("derandomised", "perturbed");
                auto small = risk_of("derandomised", "small_noise_approx");
                auto nf = risk_of("noise_free", "small_noise_approx");
                csv << "ok," << fmt_double(rep["train_recon_raw"].get<double>()) << ','
                    << fmt_double(rep["test_recon_raw"].get<double>()) << ','
                    << fmt_double(rep["gap_raw"].get<double>()) << ','
                    << fmt_double(rep["train_recon_bounded"].get<double>()) << ','
                    << fmt_double(rep["test_recon_bounded"].get<double>()) << ','
                    << fmt_double(pert["risk_bound"].get<double>()) << ','
                    << fmt_double(small["risk_bound"].get<double>()) << ','
                    << fmt_double(nf["risk_bound"].get<double>()) << ','
                    << fmt_double(pert["risk_bound_rescaled_nats_per_image"].get<double>()) << ','
                    << fmt_double(pert["kl_budget"].get<double>()) << ','
                    << rep["n_bound"].get<std::size_t>() << '\n';
              } catch (const std::exception& e) {
                std::string msg = e.what();
                std::replace(msg.begin(), msg.end(), ',', ';');
                std::replace(msg.begin(), msg.end(), '\n', ' ');
                csv << "error: " << msg << ",,,,,,,,,,,\n";
              }
              csv.flush();
            }
          }
        }
      }
    }
  }
  return csv_path;
}

}  // namespace pbvae
