#include <zlib.h>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <memory>
#include <numeric>
#include <sstream>

#include "gradnoise/tasks.hpp"

namespace gradnoise::tasks {
namespace {

std::string hex32(std::uint32_t v) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "0x%08X", v);
  return buf;
}

// gzread passes uncompressed files through unchanged.
std::vector<std::uint8_t> read_all(const std::filesystem::path& path) {
  std::unique_ptr<gzFile_s, decltype(&gzclose)> file(gzopen(path.c_str(), "rb"), &gzclose);
  if (!file) throw std::runtime_error("cannot open " + path.string());
  std::vector<std::uint8_t> bytes;
  std::uint8_t chunk[1 << 16];
  int n;
  while ((n = gzread(file.get(), chunk, sizeof chunk)) > 0) bytes.insert(bytes.end(), chunk, chunk + n);
  if (n < 0) throw FormatError(path.string() + ": read error (corrupt gzip stream?)");
  return bytes;
}

std::uint32_t read_be32(const std::vector<std::uint8_t>& bytes, std::size_t offset, const std::filesystem::path& path) {
  if (bytes.size() < offset + 4) throw FormatError(path.string() + ": truncated header");
  return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
         (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

void check_magic(std::uint32_t actual, std::uint32_t expected, const std::filesystem::path& path) {
  if (actual != expected) {
    throw FormatError(path.string() + ": bad IDX magic, expected " + hex32(expected) + " got " + hex32(actual));
  }
}

void put_be32(std::ostream& out, std::uint32_t v) {
  const char bytes[4] = {static_cast<char>(v >> 24), static_cast<char>(v >> 16), static_cast<char>(v >> 8),
                         static_cast<char>(v)};
  out.write(bytes, 4);
}

}  // namespace

Dataset load_mnist(const std::filesystem::path& images_path, const std::filesystem::path& labels_path, Split split) {
  const auto image_bytes = read_all(images_path);
  check_magic(read_be32(image_bytes, 0, images_path), kIdxImageMagic, images_path);
  const std::uint32_t n_images = read_be32(image_bytes, 4, images_path);
  const std::uint32_t rows = read_be32(image_bytes, 8, images_path);
  const std::uint32_t cols = read_be32(image_bytes, 12, images_path);
  const std::size_t pixels = std::size_t{rows} * cols;
  const std::size_t expected_images = 16 + std::size_t{n_images} * pixels;
  if (image_bytes.size() < expected_images) {
    throw FormatError(images_path.string() + ": truncated, expected " + std::to_string(expected_images) +
                      " bytes, got " + std::to_string(image_bytes.size()));
  }

  const auto label_bytes = read_all(labels_path);
  check_magic(read_be32(label_bytes, 0, labels_path), kIdxLabelMagic, labels_path);
  const std::uint32_t n_labels = read_be32(label_bytes, 4, labels_path);
  if (label_bytes.size() < 8 + std::size_t{n_labels}) {
    throw FormatError(labels_path.string() + ": truncated, expected " + std::to_string(8 + std::size_t{n_labels}) +
                      " bytes, got " + std::to_string(label_bytes.size()));
  }
  if (n_images != n_labels) {
    throw ConsistencyError("image file has " + std::to_string(n_images) + " entries but label file has " +
                           std::to_string(n_labels));
  }

  Dataset ds;
  ds.split = split;
  ds.inputs = Tensor(Shape(n_images, pixels));
  auto out = ds.inputs.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<double>(image_bytes[16 + i]) / 255.0;
  ds.labels.assign(label_bytes.begin() + 8, label_bytes.begin() + 8 + n_labels);
  return ds;
}

void write_idx_images(const std::filesystem::path& path, std::uint32_t rows, std::uint32_t cols,
                      std::span<const std::uint8_t> pixels) {
  const std::size_t per_image = std::size_t{rows} * cols;
  if (per_image == 0 || pixels.size() % per_image != 0) throw DimensionError("write_idx_images: ragged pixel buffer");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  put_be32(out, kIdxImageMagic);
  put_be32(out, static_cast<std::uint32_t>(pixels.size() / per_image));
  put_be32(out, rows);
  put_be32(out, cols);
  out.write(reinterpret_cast<const char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()));
}

void write_idx_labels(const std::filesystem::path& path, std::span<const std::uint8_t> labels) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  put_be32(out, kIdxLabelMagic);
  put_be32(out, static_cast<std::uint32_t>(labels.size()));
  out.write(reinterpret_cast<const char*>(labels.data()), static_cast<std::streamsize>(labels.size()));
}

Dataset subset(const Dataset& dataset, std::size_t n, Rng& rng) {
  if (n == 0) throw std::invalid_argument("subset: n must be positive");
  if (n > dataset.size()) {
    throw std::invalid_argument("subset: requested " + std::to_string(n) + " of " + std::to_string(dataset.size()) +
                                " examples");
  }
  // Partial Fisher-Yates.
  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t j = i + rng.uniform_index(order.size() - i);
    std::swap(order[i], order[j]);
  }

  const std::size_t dim = dataset.inputs.cols();
  Dataset out;
  out.split = dataset.split;
  out.inputs = Tensor(Shape(n, dim));
  out.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto src = dataset.inputs.row(order[i]);
    std::copy(src.begin(), src.end(), out.inputs.row(i).begin());
    out.labels[i] = dataset.labels[order[i]];
  }
  return out;
}

}  // namespace gradnoise::tasks
