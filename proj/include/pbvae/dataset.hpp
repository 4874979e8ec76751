#ifndef PBVAE_DATASET_HPP
#define PBVAE_DATASET_HPP

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "pbvae/rng.hpp"
#include "pbvae/tensor.hpp"

namespace pbvae {

constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

// Raw IDX payload: big-endian header parsed into dims, byte payload kept flat.
struct IdxData {
  std::vector<std::size_t> dims;
  std::vector<std::uint8_t> bytes;
};

// Reads an IDX file, transparently gunzipping when the gzip magic is present.
IdxData load_idx(const std::string& path, std::uint32_t expect_magic);

// Serialises back to IDX bytes (big-endian header + payload). Used to check
// the loader is byte-exact and to write fixtures.
std::vector<std::uint8_t> idx_to_bytes(const IdxData& idx, std::uint32_t magic);

enum class SplitTag { train, test, prior, bound };

struct ImageDataset {
  std::vector<std::uint8_t> examples;  // count x dim entries in {0, 1}
  std::size_t count = 0;
  std::size_t dim = 0;
  std::string source_name;
  SplitTag split_tag = SplitTag::train;

  const std::uint8_t* row(std::size_t i) const { return examples.data() + i * dim; }
};

// entry = 1 iff pixel > threshold (default 127.5 on the 0..255 scale).
ImageDataset binarise(const IdxData& images, double threshold = 127.5,
                      const std::string& source_name = "");

// Keeps the first `limit` images (0 = all).
ImageDataset take_prefix(const ImageDataset& ds, std::size_t limit);

struct SplitSpec {
  double prior_fraction = 0.5;
  std::uint64_t shuffle_seed = 0;
};

// Deterministic shuffle then partition at floor(count * prior_fraction).
// The two parts are disjoint and cover the input.
std::pair<ImageDataset, ImageDataset> split(const ImageDataset& ds, const SplitSpec& spec);

// Materialises rows as a (batch x dim) tensor of doubles.
Tensor gather_batch(const ImageDataset& ds, const std::vector<std::size_t>& indices);
Tensor full_batch(const ImageDataset& ds);

// Fresh shuffle per epoch from epoch_seed; the last partial batch is kept.
class Minibatches {
 public:
  Minibatches(const ImageDataset& ds, std::size_t batch_size, std::uint64_t epoch_seed);

  std::size_t batch_count() const;
  Tensor batch(std::size_t b) const;
  const std::vector<std::size_t>& order() const { return order_; }

 private:
  const ImageDataset* ds_;
  std::size_t batch_size_;
  std::vector<std::size_t> order_;
};

}  // namespace pbvae

#endif  // PBVAE_DATASET_HPP
