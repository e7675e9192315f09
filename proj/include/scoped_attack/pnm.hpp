#pragma once

#include <cctype>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "scoped_attack/errors.hpp"
#include "scoped_attack/image.hpp"

namespace scoped_attack {

namespace detail {

// Reads the next header token, skipping whitespace and '#' comments.
inline std::string pnm_token(std::istream& in) {
  std::string tok;
  int c;
  while ((c = in.get()) != EOF) {
    if (c == '#') {
      while ((c = in.get()) != EOF && c != '\n') {
      }
      continue;
    }
    if (std::isspace(c)) {
      if (!tok.empty()) return tok;
      continue;
    }
    tok.push_back(static_cast<char>(c));
  }
  if (tok.empty()) throw FormatError("truncated PNM header");
  return tok;
}

inline int pnm_int(std::istream& in) {
  std::string tok = pnm_token(in);
  try {
    std::size_t pos = 0;
    int v = std::stoi(tok, &pos);
    if (pos != tok.size()) throw FormatError("bad PNM header token: " + tok);
    return v;
  } catch (const std::invalid_argument&) {
    throw FormatError("bad PNM header token: " + tok);
  } catch (const std::out_of_range&) {
    throw FormatError("bad PNM header token: " + tok);
  }
}

}  // namespace detail

// Binary PGM (P5) and PPM (P6) with up to 8-bit samples. Samples are rescaled
// to the [0, 255] range when maxval is below 255.
inline Photo read_pnm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open: " + path.string());

  std::string magic = detail::pnm_token(in);
  int channels;
  if (magic == "P5") {
    channels = 1;
  } else if (magic == "P6") {
    channels = 3;
  } else {
    throw FormatError("unsupported PNM magic: " + magic);
  }

  Photo photo;
  photo.channels = channels;
  photo.width = detail::pnm_int(in);
  photo.height = detail::pnm_int(in);
  int maxval = detail::pnm_int(in);
  if (photo.width <= 0 || photo.height <= 0) throw FormatError("bad PNM dimensions");
  if (maxval < 1 || maxval > 255) throw FormatError("unsupported PNM maxval: " + std::to_string(maxval));
  in.get();  // single whitespace after maxval

  std::size_t n = static_cast<std::size_t>(photo.width) * photo.height * channels;
  photo.data.resize(n);
  in.read(reinterpret_cast<char*>(photo.data.data()), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in.gcount()) != n) throw FormatError("truncated PNM payload");
  if (maxval != 255) {
    for (auto& b : photo.data) {
      b = static_cast<std::uint8_t>(std::lround(b * 255.0 / maxval));
    }
  }
  return photo;
}

inline void write_pgm(const std::filesystem::path& path, int width, int height,
                      const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open for writing: " + path.string());
  out << "P5\n" << width << " " << height << "\n255\n";
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

// Pixel byte = round(intensity * 255).
inline void write_pgm(const std::filesystem::path& path, const Image& img) {
  std::vector<std::uint8_t> bytes(kImagePixels);
  for (int i = 0; i < kImagePixels; ++i) {
    double v = img[i];
    v = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
    bytes[i] = static_cast<std::uint8_t>(std::lround(v * 255.0));
  }
  write_pgm(path, kImageCols, kImageRows, bytes);
}

}  // namespace scoped_attack
