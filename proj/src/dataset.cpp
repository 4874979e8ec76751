#include "pbvae/dataset.hpp"

#include <zlib.h>

#include <algorithm>
#include <fstream>
#include <numeric>

#include "pbvae/errors.hpp"

namespace pbvae {

namespace {

std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("load_idx: cannot open '" + path + "'");
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in),
                                   std::istreambuf_iterator<char>());
}

bool is_gzip(const std::vector<std::uint8_t>& bytes) {
  return bytes.size() >= 2 && bytes[0] == 0x1f && bytes[1] == 0x8b;
}

std::vector<std::uint8_t> gunzip(const std::vector<std::uint8_t>& in) {
  z_stream zs{};
  if (inflateInit2(&zs, 15 + 16) != Z_OK) {
    throw FormatError("gunzip: inflateInit2 failed");
  }
  std::vector<std::uint8_t> out;
  out.reserve(in.size() * 4);
  std::uint8_t buffer[1 << 16];
  zs.next_in = const_cast<Bytef*>(in.data());
  zs.avail_in = static_cast<uInt>(in.size());
  int rc = Z_OK;
  do {
    zs.next_out = buffer;
    zs.avail_out = sizeof(buffer);
    rc = inflate(&zs, Z_NO_FLUSH);
    if (rc != Z_OK && rc != Z_STREAM_END) {
      inflateEnd(&zs);
      throw FormatError("gunzip: corrupt stream (zlib rc " + std::to_string(rc) + ")");
    }
    out.insert(out.end(), buffer, buffer + (sizeof(buffer) - zs.avail_out));
  } while (rc != Z_STREAM_END);
  inflateEnd(&zs);
  return out;
}

std::uint32_t read_be32(const std::vector<std::uint8_t>& bytes, std::size_t offset) {
  return (static_cast<std::uint32_t>(bytes[offset]) << 24) |
         (static_cast<std::uint32_t>(bytes[offset + 1]) << 16) |
         (static_cast<std::uint32_t>(bytes[offset + 2]) << 8) |
         static_cast<std::uint32_t>(bytes[offset + 3]);
}

void write_be32(std::vector<std::uint8_t>& bytes, std::uint32_t v) {
  bytes.push_back(static_cast<std::uint8_t>(v >> 24));
  bytes.push_back(static_cast<std::uint8_t>(v >> 16));
  bytes.push_back(static_cast<std::uint8_t>(v >> 8));
  bytes.push_back(static_cast<std::uint8_t>(v));
}

ImageDataset copy_rows(const ImageDataset& ds, const std::vector<std::size_t>& rows) {
  ImageDataset out;
  out.dim = ds.dim;
  out.count = rows.size();
  out.source_name = ds.source_name;
  out.split_tag = ds.split_tag;
  out.examples.resize(rows.size() * ds.dim);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::copy_n(ds.row(rows[i]), ds.dim, out.examples.data() + i * ds.dim);
  }
  return out;
}

}  // namespace

IdxData load_idx(const std::string& path, std::uint32_t expect_magic) {
  std::vector<std::uint8_t> bytes = read_file(path);
  if (is_gzip(bytes)) bytes = gunzip(bytes);
  if (bytes.size() < 4) {
    throw FormatError("load_idx: '" + path + "' truncated at byte offset 0 (no magic)");
  }
  const std::uint32_t magic = read_be32(bytes, 0);
  if (magic != expect_magic) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "expected magic 0x%08x, found 0x%08x", expect_magic, magic);
    throw FormatError("load_idx: '" + path + "': " + buf);
  }
  const std::size_t ndim = magic & 0xff;
  if (bytes.size() < 4 + 4 * ndim) {
    throw FormatError("load_idx: '" + path + "' truncated in header at byte offset " +
                      std::to_string(bytes.size()));
  }
  IdxData idx;
  std::size_t total = 1;
  for (std::size_t k = 0; k < ndim; ++k) {
    const std::size_t dim = read_be32(bytes, 4 + 4 * k);
    idx.dims.push_back(dim);
    total *= dim;
  }
  const std::size_t payload_offset = 4 + 4 * ndim;
  if (bytes.size() != payload_offset + total) {
    throw FormatError("load_idx: '" + path + "' payload length mismatch at byte offset " +
                      std::to_string(bytes.size()) + " (expected " +
                      std::to_string(payload_offset + total) + " bytes)");
  }
  idx.bytes.assign(bytes.begin() + static_cast<std::ptrdiff_t>(payload_offset), bytes.end());
  return idx;
}

std::vector<std::uint8_t> idx_to_bytes(const IdxData& idx, std::uint32_t magic) {
  std::vector<std::uint8_t> out;
  out.reserve(4 + 4 * idx.dims.size() + idx.bytes.size());
  write_be32(out, magic);
  for (std::size_t dim : idx.dims) write_be32(out, static_cast<std::uint32_t>(dim));
  out.insert(out.end(), idx.bytes.begin(), idx.bytes.end());
  return out;
}

ImageDataset binarise(const IdxData& images, double threshold, const std::string& source_name) {
  if (images.dims.empty()) throw ContractError("binarise: image tensor has no dimensions");
  ImageDataset ds;
  ds.count = images.dims[0];
  ds.dim = 1;
  for (std::size_t k = 1; k < images.dims.size(); ++k) ds.dim *= images.dims[k];
  ds.source_name = source_name;
  ds.examples.resize(ds.count * ds.dim);
  for (std::size_t i = 0; i < ds.examples.size(); ++i) {
    ds.examples[i] = static_cast<double>(images.bytes[i]) > threshold ? 1 : 0;
  }
  return ds;
}

ImageDataset take_prefix(const ImageDataset& ds, std::size_t limit) {
  if (limit == 0 || limit >= ds.count) return ds;
  ImageDataset out = ds;
  out.count = limit;
  out.examples.resize(limit * ds.dim);
  return out;
}

std::pair<ImageDataset, ImageDataset> split(const ImageDataset& ds, const SplitSpec& spec) {
  if (spec.prior_fraction < 0.0 || spec.prior_fraction >= 1.0) {
    throw ContractError("split: prior_fraction must lie in [0, 1)");
  }
  const std::size_t prior_count =
      static_cast<std::size_t>(static_cast<double>(ds.count) * spec.prior_fraction);
  if (prior_count >= ds.count) {
    throw ContractError("split: bound set would be empty");
  }
  std::vector<std::size_t> order(ds.count);
  std::iota(order.begin(), order.end(), 0);
  RngStream rng = RngStream(spec.shuffle_seed).substream(StreamId::data_shuffle);
  // Fisher-Yates.
  for (std::size_t i = ds.count; i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng.next_u64() % i);
    std::swap(order[i - 1], order[j]);
  }
  std::vector<std::size_t> prior_rows(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(prior_count));
  std::vector<std::size_t> bound_rows(order.begin() + static_cast<std::ptrdiff_t>(prior_count), order.end());
  ImageDataset prior = copy_rows(ds, prior_rows);
  prior.split_tag = SplitTag::prior;
  ImageDataset bound = copy_rows(ds, bound_rows);
  bound.split_tag = SplitTag::bound;
  return {std::move(prior), std::move(bound)};
}

Tensor gather_batch(const ImageDataset& ds, const std::vector<std::size_t>& indices) {
  Tensor t = Tensor::zeros({indices.size(), ds.dim});
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const std::uint8_t* src = ds.row(indices[i]);
    for (std::size_t j = 0; j < ds.dim; ++j) t.data[i * ds.dim + j] = src[j];
  }
  return t;
}

Tensor full_batch(const ImageDataset& ds) {
  std::vector<std::size_t> idx(ds.count);
  std::iota(idx.begin(), idx.end(), 0);
  return gather_batch(ds, idx);
}

Minibatches::Minibatches(const ImageDataset& ds, std::size_t batch_size, std::uint64_t epoch_seed)
    : ds_(&ds), batch_size_(batch_size), order_(ds.count) {
  if (batch_size == 0) throw ContractError("minibatches: batch_size must be >= 1");
  std::iota(order_.begin(), order_.end(), 0);
  RngStream rng = RngStream(epoch_seed).substream(StreamId::data_shuffle);
  for (std::size_t i = order_.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng.next_u64() % i);
    std::swap(order_[i - 1], order_[j]);
  }
}

std::size_t Minibatches::batch_count() const {
  return (order_.size() + batch_size_ - 1) / batch_size_;
}

Tensor Minibatches::batch(std::size_t b) const {
  const std::size_t begin = b * batch_size_;
  const std::size_t end = std::min(begin + batch_size_, order_.size());
  std::vector<std::size_t> rows(order_.begin() + static_cast<std::ptrdiff_t>(begin),
                                order_.begin() + static_cast<std::ptrdiff_t>(end));
  return gather_batch(*ds_, rows);
}

}  // namespace pbvae
