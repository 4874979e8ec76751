#include "pbvae/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "pbvae/errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

namespace pbvae {

namespace {

void write_params(std::ostream& out, const ParamVector& params) {
  for (const auto& layer : params.layers) {
    out.write(reinterpret_cast<const char*>(layer.weight.data.data()),
              static_cast<std::streamsize>(layer.weight.data.size() * sizeof(double)));
    out.write(reinterpret_cast<const char*>(layer.bias.data.data()),
              static_cast<std::streamsize>(layer.bias.data.size() * sizeof(double)));
  }
}

void read_params(std::istream& in, ParamVector& params, const std::string& path) {
  for (auto& layer : params.layers) {
    in.read(reinterpret_cast<char*>(layer.weight.data.data()),
            static_cast<std::streamsize>(layer.weight.data.size() * sizeof(double)));
    in.read(reinterpret_cast<char*>(layer.bias.data.data()),
            static_cast<std::streamsize>(layer.bias.data.size() * sizeof(double)));
    if (!in) throw FormatError("checkpoint: '" + path + "' truncated parameter payload");
  }
}

ParamVector shaped_params(const MlpConfig& config) {
  RngStream unused(0);
  return init_params(config, InitScheme::zero, unused);
}

}  // namespace

Checkpoint make_checkpoint(const std::string& kind, const VaeModel& model, std::uint64_t seed) {
  Checkpoint ckpt;
  ckpt.kind = kind;
  ckpt.input_dim = model.input_dim;
  ckpt.latent_dim = model.latent_dim;
  ckpt.hidden = model.encoder_config.hidden_widths;
  ckpt.seed = seed;
  ckpt.phi = model.phi;
  ckpt.theta = model.theta;
  return ckpt;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  nlohmann::json header;
  header["format"] = "pbvae-checkpoint";
  header["version"] = 1;
  header["kind"] = ckpt.kind;
  header["input_dim"] = ckpt.input_dim;
  header["latent_dim"] = ckpt.latent_dim;
  header["hidden"] = ckpt.hidden;
  header["seed"] = std::to_string(ckpt.seed);
  header["phi_count"] = ckpt.phi.total_count();
  header["theta_count"] = ckpt.theta.total_count();
  if (!ckpt.config_hash.empty()) header["config_hash"] = ckpt.config_hash;
  if (ckpt.rho_phi) header["rho_phi"] = *ckpt.rho_phi;
  if (ckpt.rho_theta) header["rho_theta"] = *ckpt.rho_theta;

  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("checkpoint: cannot write '" + path + "'");
  out << header.dump() << '\n';
  write_params(out, ckpt.phi);
  write_params(out, ckpt.theta);
  if (!out) throw FormatError("checkpoint: write to '" + path + "' failed");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("checkpoint: cannot open '" + path + "'");
  std::string header_line;
  if (!std::getline(in, header_line)) {
    throw FormatError("checkpoint: '" + path + "' missing JSON header");
  }
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(header_line);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError("checkpoint: '" + path + "' bad header: " + e.what());
  }
  if (header.value("format", "") != "pbvae-checkpoint") {
    throw FormatError("checkpoint: '" + path + "' is not a pbvae checkpoint");
  }

  Checkpoint ckpt;
  ckpt.kind = header.value("kind", "prior");
  ckpt.input_dim = header.at("input_dim").get<std::size_t>();
  ckpt.latent_dim = header.at("latent_dim").get<std::size_t>();
  ckpt.hidden = header.at("hidden").get<std::vector<std::size_t>>();
  ckpt.seed = std::stoull(header.value("seed", "0"));
  ckpt.config_hash = header.value("config_hash", "");
  if (header.contains("rho_phi")) ckpt.rho_phi = header["rho_phi"].get<double>();
  if (header.contains("rho_theta")) ckpt.rho_theta = header["rho_theta"].get<double>();

  MlpConfig enc{ckpt.input_dim, ckpt.hidden, 2 * ckpt.latent_dim,
                HiddenActivation::relu, OutputActivation::identity};
  std::vector<std::size_t> rev(ckpt.hidden.rbegin(), ckpt.hidden.rend());
  MlpConfig dec{ckpt.latent_dim, rev, ckpt.input_dim,
                HiddenActivation::relu, OutputActivation::sigmoid};
  ckpt.phi = shaped_params(enc);
  ckpt.theta = shaped_params(dec);
  if (ckpt.phi.total_count() != header.at("phi_count").get<std::size_t>() ||
      ckpt.theta.total_count() != header.at("theta_count").get<std::size_t>()) {
    throw FormatError("checkpoint: '" + path + "' parameter counts do not match architecture");
  }
  read_params(in, ckpt.phi, path);
  read_params(in, ckpt.theta, path);
  return ckpt;
}

VaeModel model_from_checkpoint(const Checkpoint& ckpt) {
  VaeModel model;
  model.input_dim = ckpt.input_dim;
  model.latent_dim = ckpt.latent_dim;
  model.encoder_config = MlpConfig{ckpt.input_dim, ckpt.hidden, 2 * ckpt.latent_dim,
                                   HiddenActivation::relu, OutputActivation::identity};
  std::vector<std::size_t> rev(ckpt.hidden.rbegin(), ckpt.hidden.rend());
  model.decoder_config = MlpConfig{ckpt.latent_dim, rev, ckpt.input_dim,
                                   HiddenActivation::relu, OutputActivation::sigmoid};
  model.phi = ckpt.phi;
  model.theta = ckpt.theta;
  return model;
}

std::string bytes_hash(const std::string& bytes) {
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    hash ^= c;
    hash *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(hash));
  return std::string(buf);
}

std::string file_hash(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("file_hash: cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return bytes_hash(ss.str());
}

}  // namespace pbvae
