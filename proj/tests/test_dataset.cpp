#include <doctest.h>

#include <zlib.h>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "pbvae/dataset.hpp"
#include "pbvae/errors.hpp"

using namespace pbvae;

namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

void write_bytes(const std::string& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
}

std::vector<std::uint8_t> read_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in),
                                   std::istreambuf_iterator<char>());
}

std::vector<std::uint8_t> gzip_bytes(const std::vector<std::uint8_t>& in) {
  z_stream zs{};
  REQUIRE(deflateInit2(&zs, Z_BEST_COMPRESSION, Z_DEFLATED, 15 + 16, 8,
                       Z_DEFAULT_STRATEGY) == Z_OK);
  std::vector<std::uint8_t> out(in.size() + 128);
  zs.next_in = const_cast<Bytef*>(in.data());
  zs.avail_in = static_cast<uInt>(in.size());
  zs.next_out = out.data();
  zs.avail_out = static_cast<uInt>(out.size());
  REQUIRE(deflate(&zs, Z_FINISH) == Z_STREAM_END);
  out.resize(out.size() - zs.avail_out);
  deflateEnd(&zs);
  return out;
}

// Two 2x2 images, authored by hand per the IDX layout: big-endian magic
// 0x00000803, then dims 2, 2, 2, then the raw pixels.
std::vector<std::uint8_t> handcrafted_idx() {
  return {
      0x00, 0x00, 0x08, 0x03,  // magic: ubyte, 3 dims
      0x00, 0x00, 0x00, 0x02,  // 2 images
      0x00, 0x00, 0x00, 0x02,  // 2 rows
      0x00, 0x00, 0x00, 0x02,  // 2 cols
      0,    255,  128,  127,   // image 0
      10,   200,  0,    255,   // image 1
  };
}

}  // namespace

TEST_SUITE("dataset") {

TEST_CASE("handcrafted fixture parses with exact shape and bytes") {
  const std::string path = temp_path("pbvae_fixture.idx");
  write_bytes(path, handcrafted_idx());
  IdxData idx = load_idx(path, kIdxImagesMagic);
  REQUIRE(idx.dims == std::vector<std::size_t>{2, 2, 2});
  CHECK(idx.bytes == std::vector<std::uint8_t>{0, 255, 128, 127, 10, 200, 0, 255});
}

TEST_CASE("wrong magic names expected and found values") {
  const std::string path = temp_path("pbvae_fixture_labels.idx");
  write_bytes(path, handcrafted_idx());
  try {
    (void)load_idx(path, kIdxLabelsMagic);
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("0x00000801") != std::string::npos);
    CHECK(msg.find("0x00000803") != std::string::npos);
  }
}

TEST_CASE("gzipped fixture decodes identically to the raw fixture") {
  const std::string raw_path = temp_path("pbvae_fixture_raw.idx");
  const std::string gz_path = temp_path("pbvae_fixture.idx.gz");
  write_bytes(raw_path, handcrafted_idx());
  write_bytes(gz_path, gzip_bytes(handcrafted_idx()));
  IdxData raw = load_idx(raw_path, kIdxImagesMagic);
  IdxData gz = load_idx(gz_path, kIdxImagesMagic);
  CHECK(raw.dims == gz.dims);
  CHECK(raw.bytes == gz.bytes);
}

TEST_CASE("truncated payload reports a byte offset") {
  auto bytes = handcrafted_idx();
  bytes.pop_back();
  const std::string path = temp_path("pbvae_truncated.idx");
  write_bytes(path, bytes);
  try {
    (void)load_idx(path, kIdxImagesMagic);
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("byte offset") != std::string::npos);
  }
}

TEST_CASE("loader is byte-exact under re-serialisation") {
  const std::string path = temp_path("pbvae_roundtrip.idx");
  write_bytes(path, handcrafted_idx());
  IdxData idx = load_idx(path, kIdxImagesMagic);
  CHECK(idx_to_bytes(idx, kIdxImagesMagic) == read_bytes(path));
}

TEST_CASE("binarise threshold semantics") {
  IdxData idx;
  idx.dims = {1, 4};
  idx.bytes = {0, 127, 128, 255};
  ImageDataset ds = binarise(idx);
  CHECK(ds.examples == std::vector<std::uint8_t>{0, 0, 1, 1});

  // All-zero image maps to an all-zero row.
  IdxData zeros;
  zeros.dims = {1, 3};
  zeros.bytes = {0, 0, 0};
  ImageDataset zds = binarise(zeros);
  CHECK(zds.examples == std::vector<std::uint8_t>{0, 0, 0});

  // Idempotent after rescaling back to pixel range.
  IdxData rescaled;
  rescaled.dims = ds.count > 0 ? std::vector<std::size_t>{ds.count, ds.dim}
                               : std::vector<std::size_t>{};
  for (std::uint8_t v : ds.examples) rescaled.bytes.push_back(v ? 255 : 0);
  ImageDataset again = binarise(rescaled);
  CHECK(again.examples == ds.examples);
}

TEST_CASE("split determinism, disjointness and multiset union") {
  ImageDataset ds;
  ds.count = 101;
  ds.dim = 3;
  ds.examples.resize(ds.count * ds.dim);
  RngStream rng(5);
  for (auto& b : ds.examples) b = rng.next_uniform() < 0.5 ? 0 : 1;

  SUBCASE("prior fraction zero keeps everything in the bound set") {
    auto [prior, bound] = split(ds, SplitSpec{0.0, 9});
    CHECK(prior.count == 0);
    CHECK(bound.count == ds.count);
  }

  SUBCASE("same seed gives the same split") {
    auto [p1, b1] = split(ds, SplitSpec{0.4, 9});
    auto [p2, b2] = split(ds, SplitSpec{0.4, 9});
    CHECK(p1.examples == p2.examples);
    CHECK(b1.examples == b2.examples);
    CHECK(p1.count == 40);
    CHECK(b1.count == 61);
    CHECK(p1.split_tag == SplitTag::prior);
    CHECK(b1.split_tag == SplitTag::bound);
  }

  SUBCASE("union of the parts is the input multiset") {
    auto [prior, bound] = split(ds, SplitSpec{0.35, 10});
    auto row_key = [](const ImageDataset& d, std::size_t i) {
      return std::string(reinterpret_cast<const char*>(d.row(i)), d.dim);
    };
    std::map<std::string, int> want;
    for (std::size_t i = 0; i < ds.count; ++i) want[row_key(ds, i)] += 1;
    std::map<std::string, int> got;
    for (std::size_t i = 0; i < prior.count; ++i) got[row_key(prior, i)] += 1;
    for (std::size_t i = 0; i < bound.count; ++i) got[row_key(bound, i)] += 1;
    CHECK(want == got);
  }

  SUBCASE("a full prior fraction is rejected") {
    CHECK_THROWS_AS(split(ds, SplitSpec{1.0, 3}), ContractError);
  }
}

TEST_CASE("minibatches cover the dataset as a permutation") {
  ImageDataset ds;
  ds.count = 23;
  ds.dim = 2;
  ds.examples.resize(ds.count * ds.dim);
  for (std::size_t i = 0; i < ds.count; ++i) {
    ds.examples[i * 2] = static_cast<std::uint8_t>(i % 2);
    ds.examples[i * 2 + 1] = static_cast<std::uint8_t>((i / 2) % 2);
  }

  Minibatches mb(ds, 5, 77);
  CHECK(mb.batch_count() == 5);  // 4 full + 1 partial
  std::vector<std::size_t> seen;
  for (std::size_t b = 0; b < mb.batch_count(); ++b) {
    Tensor batch = mb.batch(b);
    CHECK(batch.cols() == 2);
    if (b < 4) CHECK(batch.rows() == 5);
  }
  std::vector<std::size_t> order = mb.order();
  std::sort(order.begin(), order.end());
  for (std::size_t i = 0; i < ds.count; ++i) CHECK(order[i] == i);

  SUBCASE("single batch when batch_size covers the dataset") {
    Minibatches big(ds, 64, 78);
    CHECK(big.batch_count() == 1);
    CHECK(big.batch(0).rows() == ds.count);
  }

  SUBCASE("different epoch seeds give different orders") {
    Minibatches a(ds, 5, 100);
    Minibatches b(ds, 5, 101);
    CHECK(a.order() != b.order());
  }
}

}  // TEST_SUITE
