#pragma once

#include <zlib.h>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "scoped_attack/errors.hpp"

namespace scoped_attack {

struct FileStamp {
  std::string path;
  std::uint64_t size = 0;
  std::uint32_t crc32 = 0;
};

// Every output directory gets one of these next to its artifacts: the full
// parameter set, seeds, and input checksums needed to reproduce the run.
struct RunManifest {
  std::string subcommand;
  std::map<std::string, std::string> parameters;
  std::uint64_t seed = 0;
  std::vector<FileStamp> inputs;
  std::vector<std::string> outputs;
  double wall_seconds = 0;
};

inline FileStamp stamp_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open: " + path.string());
  FileStamp stamp;
  stamp.path = path.string();
  uLong crc = ::crc32(0L, Z_NULL, 0);
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof(buf));
    std::streamsize got = in.gcount();
    if (got > 0) {
      crc = ::crc32(crc, reinterpret_cast<const Bytef*>(buf), static_cast<uInt>(got));
      stamp.size += static_cast<std::uint64_t>(got);
    }
  }
  stamp.crc32 = static_cast<std::uint32_t>(crc);
  return stamp;
}

inline void write_manifest(const RunManifest& manifest, const std::filesystem::path& path) {
  nlohmann::json j;
  j["subcommand"] = manifest.subcommand;
  j["parameters"] = manifest.parameters;
  j["seed"] = manifest.seed;
  j["inputs"] = nlohmann::json::array();
  for (const FileStamp& s : manifest.inputs) {
    j["inputs"].push_back({{"path", s.path}, {"size", s.size}, {"crc32", s.crc32}});
  }
  j["outputs"] = manifest.outputs;
  j["wall_seconds"] = manifest.wall_seconds;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open for writing: " + path.string());
  out << j.dump(2) << "\n";
}

}  // namespace scoped_attack
