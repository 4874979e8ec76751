#ifndef PBVAE_CHECKPOINT_HPP
#define PBVAE_CHECKPOINT_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "pbvae/vae.hpp"

namespace pbvae {

// Checkpoint file: one JSON header line (architecture, parameter counts,
// seed provenance) followed by the flat little-endian float64 parameters,
// encoder first.
struct Checkpoint {
  std::string kind = "prior";  // "prior" | "posterior"
  std::size_t input_dim = 0;
  std::size_t latent_dim = 0;
  std::vector<std::size_t> hidden;
  std::uint64_t seed = 0;
  std::string config_hash;          // provenance stamp, may be empty
  std::optional<double> rho_phi;    // posterior checkpoints only
  std::optional<double> rho_theta;
  ParamVector phi;
  ParamVector theta;
};

Checkpoint make_checkpoint(const std::string& kind, const VaeModel& model, std::uint64_t seed);

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

VaeModel model_from_checkpoint(const Checkpoint& ckpt);

// FNV-1a 64-bit hash of a file's bytes, as a hex string. Provenance, not
// cryptography.
std::string file_hash(const std::string& path);
std::string bytes_hash(const std::string& bytes);

}  // namespace pbvae

#endif  // PBVAE_CHECKPOINT_HPP
