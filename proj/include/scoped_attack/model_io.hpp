#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <variant>
#include <vector>

#include "scoped_attack/errors.hpp"
#include "scoped_attack/models.hpp"

namespace scoped_attack {

// Model container: 8-byte magic, u32 version, u32 kind, then little-endian
// IEEE-754 doubles in declared field order.
//   logreg: W (pixel-major 784x10), b (10)
//   mlp5:   per layer W (row-major in x out) then b; bn gamma, beta,
//           running_mean, running_var; dropout_rate
inline constexpr std::array<char, 8> kModelMagic = {'S', 'C', 'O', 'P', 'A', 'T', 'K', 'M'};
inline constexpr std::uint32_t kModelFormatVersion = 1;
inline constexpr std::uint32_t kModelKindLogReg = 1;
inline constexpr std::uint32_t kModelKindMlp5 = 2;

namespace detail {

class ModelWriter {
 public:
  explicit ModelWriter(const std::filesystem::path& path) : out_(path, std::ios::binary) {
    if (!out_) throw FormatError("cannot open for writing: " + path.string());
  }

  void header(std::uint32_t kind) {
    out_.write(kModelMagic.data(), kModelMagic.size());
    u32(kModelFormatVersion);
    u32(kind);
  }

  void u32(std::uint32_t v) {
    char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    out_.write(b, 4);
  }

  void doubles(const std::vector<double>& vs) {
    for (double v : vs) one_double(v);
  }

  void one_double(double v) {
    std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
    char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((bits >> (8 * i)) & 0xff);
    out_.write(b, 8);
  }

  bool good() const { return out_.good(); }

 private:
  std::ofstream out_;
};

class ModelReader {
 public:
  explicit ModelReader(const std::filesystem::path& path) : in_(path, std::ios::binary) {
    if (!in_) throw FormatError("cannot open: " + path.string());
  }

  std::uint32_t header() {
    std::array<char, 8> magic;
    in_.read(magic.data(), magic.size());
    if (in_.gcount() != 8 || magic != kModelMagic) throw FormatError("bad model magic");
    std::uint32_t version = u32();
    if (version != kModelFormatVersion) {
      throw UnsupportedVersion("model format version " + std::to_string(version));
    }
    return u32();  // kind
  }

  std::uint32_t u32() {
    unsigned char b[4];
    in_.read(reinterpret_cast<char*>(b), 4);
    if (in_.gcount() != 4) throw FormatError("truncated model file");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
  }

  void doubles(std::vector<double>& vs) {
    for (double& v : vs) v = one_double();
  }

  double one_double() {
    unsigned char b[8];
    in_.read(reinterpret_cast<char*>(b), 8);
    if (in_.gcount() != 8) throw FormatError("truncated model file");
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return std::bit_cast<double>(bits);
  }

  void expect_eof() {
    in_.peek();
    if (!in_.eof()) throw FormatError("trailing bytes in model file");
  }

 private:
  std::ifstream in_;
};

}  // namespace detail

inline void save_model(const LogRegModel& model, const std::filesystem::path& path) {
  detail::ModelWriter w(path);
  w.header(kModelKindLogReg);
  w.doubles(model.weights);
  w.doubles(model.bias);
  if (!w.good()) throw FormatError("write failed: " + path.string());
}

inline void save_model(const Mlp5Model& model, const std::filesystem::path& path) {
  detail::ModelWriter w(path);
  w.header(kModelKindMlp5);
  for (const DenseLayer& layer : model.layers) {
    w.doubles(layer.W);
    w.doubles(layer.b);
  }
  w.doubles(model.bn.gamma);
  w.doubles(model.bn.beta);
  w.doubles(model.bn.running_mean);
  w.doubles(model.bn.running_var);
  w.one_double(model.dropout_rate);
  if (!w.good()) throw FormatError("write failed: " + path.string());
}

using AnyModel = std::variant<LogRegModel, Mlp5Model>;

inline AnyModel load_model(const std::filesystem::path& path) {
  detail::ModelReader r(path);
  std::uint32_t kind = r.header();
  if (kind == kModelKindLogReg) {
    LogRegModel m;
    r.doubles(m.weights);
    r.doubles(m.bias);
    r.expect_eof();
    return m;
  }
  if (kind == kModelKindMlp5) {
    Mlp5Model m;
    for (DenseLayer& layer : m.layers) {
      r.doubles(layer.W);
      r.doubles(layer.b);
    }
    r.doubles(m.bn.gamma);
    r.doubles(m.bn.beta);
    r.doubles(m.bn.running_mean);
    r.doubles(m.bn.running_var);
    m.dropout_rate = r.one_double();
    r.expect_eof();
    return m;
  }
  throw FormatError("unknown model kind " + std::to_string(kind));
}

inline LogRegModel load_logreg(const std::filesystem::path& path) {
  AnyModel m = load_model(path);
  if (!std::holds_alternative<LogRegModel>(m)) throw FormatError("not a logistic-regression model: " + path.string());
  return std::get<LogRegModel>(std::move(m));
}

inline Mlp5Model load_mlp5(const std::filesystem::path& path) {
  AnyModel m = load_model(path);
  if (!std::holds_alternative<Mlp5Model>(m)) throw FormatError("not a 5-layer model: " + path.string());
  return std::get<Mlp5Model>(std::move(m));
}

}  // namespace scoped_attack
