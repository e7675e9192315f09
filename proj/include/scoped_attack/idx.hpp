#pragma once

#include <zlib.h>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "scoped_attack/errors.hpp"
#include "scoped_attack/image.hpp"

namespace scoped_attack {

inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelMagic = 0x00000801;

namespace detail {

inline std::uint32_t read_be_u32(std::span<const std::uint8_t> bytes, std::size_t offset) {
  if (offset + 4 > bytes.size()) throw FormatError("truncated IDX header");
  return (static_cast<std::uint32_t>(bytes[offset]) << 24) |
         (static_cast<std::uint32_t>(bytes[offset + 1]) << 16) |
         (static_cast<std::uint32_t>(bytes[offset + 2]) << 8) |
         static_cast<std::uint32_t>(bytes[offset + 3]);
}

inline void append_be_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

}  // namespace detail

// Big-endian IDX container of unsigned-byte 28x28 images, pixel / 255.
inline std::vector<Image> parse_idx_images(std::span<const std::uint8_t> bytes) {
  std::uint32_t magic = detail::read_be_u32(bytes, 0);
  if (magic != kIdxImageMagic) throw FormatError("bad IDX image magic");
  std::uint32_t count = detail::read_be_u32(bytes, 4);
  std::uint32_t rows = detail::read_be_u32(bytes, 8);
  std::uint32_t cols = detail::read_be_u32(bytes, 12);
  if (rows != kImageRows || cols != kImageCols) {
    throw UnsupportedShape("IDX images are " + std::to_string(rows) + "x" + std::to_string(cols));
  }
  std::size_t expected = 16 + static_cast<std::size_t>(count) * kImagePixels;
  if (bytes.size() < expected) throw FormatError("truncated IDX image payload");

  std::vector<Image> images(count);
  const std::uint8_t* p = bytes.data() + 16;
  for (std::uint32_t n = 0; n < count; ++n) {
    for (int i = 0; i < kImagePixels; ++i) {
      images[n][i] = static_cast<double>(*p++) / 255.0;
    }
  }
  return images;
}

inline std::vector<int> parse_idx_labels(std::span<const std::uint8_t> bytes) {
  std::uint32_t magic = detail::read_be_u32(bytes, 0);
  if (magic != kIdxLabelMagic) throw FormatError("bad IDX label magic");
  std::uint32_t count = detail::read_be_u32(bytes, 4);
  if (bytes.size() < 8 + static_cast<std::size_t>(count)) {
    throw FormatError("truncated IDX label payload");
  }
  std::vector<int> labels(count);
  for (std::uint32_t n = 0; n < count; ++n) {
    std::uint8_t b = bytes[8 + n];
    if (b > 9) throw FormatError("IDX label out of range: " + std::to_string(b));
    labels[n] = b;
  }
  return labels;
}

// Inverse of parse_idx_images for images whose intensities are exact
// multiples of 1/255 (anything parsed from an IDX file qualifies).
inline std::vector<std::uint8_t> serialize_idx_images(const std::vector<Image>& images) {
  std::vector<std::uint8_t> out;
  out.reserve(16 + images.size() * kImagePixels);
  detail::append_be_u32(out, kIdxImageMagic);
  detail::append_be_u32(out, static_cast<std::uint32_t>(images.size()));
  detail::append_be_u32(out, kImageRows);
  detail::append_be_u32(out, kImageCols);
  for (const Image& img : images) {
    for (int i = 0; i < kImagePixels; ++i) {
      double v = img[i];
      v = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
      out.push_back(static_cast<std::uint8_t>(std::lround(v * 255.0)));
    }
  }
  return out;
}

inline std::vector<std::uint8_t> serialize_idx_labels(const std::vector<int>& labels) {
  std::vector<std::uint8_t> out;
  out.reserve(8 + labels.size());
  detail::append_be_u32(out, kIdxLabelMagic);
  detail::append_be_u32(out, static_cast<std::uint32_t>(labels.size()));
  for (int l : labels) out.push_back(static_cast<std::uint8_t>(l));
  return out;
}

namespace detail {

inline std::vector<std::uint8_t> gunzip(const std::vector<std::uint8_t>& compressed) {
  z_stream strm{};
  if (inflateInit2(&strm, 16 + MAX_WBITS) != Z_OK) throw FormatError("zlib init failed");
  std::vector<std::uint8_t> out;
  std::vector<std::uint8_t> buf(1 << 20);
  strm.next_in = const_cast<Bytef*>(compressed.data());
  strm.avail_in = static_cast<uInt>(compressed.size());
  int ret = Z_OK;
  do {
    strm.next_out = buf.data();
    strm.avail_out = static_cast<uInt>(buf.size());
    ret = inflate(&strm, Z_NO_FLUSH);
    if (ret != Z_OK && ret != Z_STREAM_END) {
      inflateEnd(&strm);
      throw FormatError("corrupt gzip stream");
    }
    out.insert(out.end(), buf.data(), buf.data() + (buf.size() - strm.avail_out));
  } while (ret != Z_STREAM_END && (strm.avail_in > 0 || strm.avail_out == 0));
  inflateEnd(&strm);
  if (ret != Z_STREAM_END) throw FormatError("truncated gzip stream");
  return out;
}

}  // namespace detail

// Reads a file, decompressing transparently when the name ends in ".gz".
inline std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open: " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (path.extension() == ".gz") return detail::gunzip(bytes);
  return bytes;
}

namespace detail {

inline std::filesystem::path find_idx_file(const std::filesystem::path& dir, const std::string& stem) {
  for (const char* suffix : {"", ".gz"}) {
    std::filesystem::path p = dir / (stem + suffix);
    if (std::filesystem::exists(p)) return p;
  }
  throw FormatError("missing MNIST file " + (dir / stem).string() + "[.gz]");
}

}  // namespace detail

// Loads one split from a directory holding the canonical MNIST file names
// (train-images-idx3-ubyte, t10k-labels-idx1-ubyte, ...), gzipped or not.
inline Dataset load_mnist(const std::filesystem::path& dir, Split split) {
  const std::string prefix = split == Split::train ? "train" : "t10k";
  auto image_bytes = read_file_bytes(detail::find_idx_file(dir, prefix + "-images-idx3-ubyte"));
  auto label_bytes = read_file_bytes(detail::find_idx_file(dir, prefix + "-labels-idx1-ubyte"));
  std::vector<Image> images = parse_idx_images(image_bytes);
  std::vector<int> labels = parse_idx_labels(label_bytes);
  if (images.size() != labels.size()) throw FormatError("image/label count mismatch");

  Dataset ds;
  ds.split = split;
  ds.items.resize(images.size());
  for (std::size_t i = 0; i < images.size(); ++i) {
    ds.items[i].image = images[i];
    ds.items[i].label = labels[i];
  }
  return ds;
}

}  // namespace scoped_attack
