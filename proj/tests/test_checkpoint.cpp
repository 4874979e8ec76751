#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "pbvae/checkpoint.hpp"
#include "pbvae/errors.hpp"

using namespace pbvae;

namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

VaeModel sample_model(std::uint64_t seed) {
  RngStream rng(seed);
  return make_vae_model(6, 2, {5, 4}, InitScheme::clamped_normal, rng);
}

}  // namespace

TEST_SUITE("checkpoint") {

TEST_CASE("round trip is bit-exact") {
  VaeModel model = sample_model(1);
  Checkpoint ckpt = make_checkpoint("posterior", model, 12345);
  ckpt.rho_phi = -4.2;
  ckpt.rho_theta = -3.9;
  ckpt.config_hash = "deadbeefcafef00d";
  const std::string path = temp_path("pbvae_ckpt_roundtrip.ckpt");
  save_checkpoint(path, ckpt);

  Checkpoint loaded = load_checkpoint(path);
  CHECK(loaded.kind == "posterior");
  CHECK(loaded.input_dim == 6);
  CHECK(loaded.latent_dim == 2);
  CHECK(loaded.hidden == std::vector<std::size_t>{5, 4});
  CHECK(loaded.seed == 12345);
  CHECK(loaded.config_hash == "deadbeefcafef00d");
  REQUIRE(loaded.rho_phi.has_value());
  CHECK(*loaded.rho_phi == -4.2);
  CHECK(*loaded.rho_theta == -3.9);
  REQUIRE(loaded.phi.same_layout(model.phi));
  for (std::size_t l = 0; l < model.phi.layers.size(); ++l) {
    CHECK(loaded.phi.layers[l].weight.data == model.phi.layers[l].weight.data);
    CHECK(loaded.phi.layers[l].bias.data == model.phi.layers[l].bias.data);
  }
  for (std::size_t l = 0; l < model.theta.layers.size(); ++l) {
    CHECK(loaded.theta.layers[l].weight.data == model.theta.layers[l].weight.data);
  }

  VaeModel rebuilt = model_from_checkpoint(loaded);
  CHECK(rebuilt.encoder_config == model.encoder_config);
  CHECK(rebuilt.decoder_config == model.decoder_config);
}

TEST_CASE("prior checkpoints omit the posterior scales") {
  VaeModel model = sample_model(2);
  const std::string path = temp_path("pbvae_ckpt_prior.ckpt");
  save_checkpoint(path, make_checkpoint("prior", model, 7));
  Checkpoint loaded = load_checkpoint(path);
  CHECK(loaded.kind == "prior");
  CHECK_FALSE(loaded.rho_phi.has_value());
  CHECK_FALSE(loaded.rho_theta.has_value());
}

TEST_CASE("corrupt headers and truncated payloads are rejected") {
  const std::string path = temp_path("pbvae_ckpt_bad.ckpt");
  {
    std::ofstream out(path, std::ios::binary);
    out << "{\"format\":\"something-else\"}\n";
  }
  CHECK_THROWS_AS(load_checkpoint(path), FormatError);

  VaeModel model = sample_model(3);
  const std::string good = temp_path("pbvae_ckpt_good.ckpt");
  save_checkpoint(good, make_checkpoint("prior", model, 1));
  // Truncate the parameter payload.
  const auto size = std::filesystem::file_size(good);
  std::filesystem::resize_file(good, size - 16);
  CHECK_THROWS_AS(load_checkpoint(good), FormatError);
}

TEST_CASE("file hash is stable and content sensitive") {
  const std::string a = temp_path("pbvae_hash_a.bin");
  const std::string b = temp_path("pbvae_hash_b.bin");
  {
    std::ofstream(a, std::ios::binary) << "hello";
    std::ofstream(b, std::ios::binary) << "hellp";
  }
  CHECK(file_hash(a) == file_hash(a));
  CHECK(file_hash(a) != file_hash(b));
  CHECK(file_hash(a).size() == 16);
  CHECK(bytes_hash("hello") == file_hash(a));
}

}  // TEST_SUITE
