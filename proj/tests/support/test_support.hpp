#pragma once

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

#include "rdis/document.hpp"

namespace rdis::test {

inline std::filesystem::path source_dir() { return RDIS_SOURCE_DIR; }
inline std::filesystem::path fixture(const std::string& rel) { return source_dir() / "tests" / "fixtures" / rel; }
inline std::filesystem::path device(const std::string& name) {
  return source_dir() / "devices" / (name + ".rdis.json");
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline RdisDocument load_valid(const std::filesystem::path& p) {
  auto r = parse_document(read_file(p));
  if (!r.ok()) {
    std::string msg = "fixture " + p.string() + " is invalid:";
    for (const auto& d : r.diagnostics) msg += "\n  " + format_diagnostic(d);
    throw std::runtime_error(msg);
  }
  return *r.document;
}

/// Seeded generator so property failures reproduce.
inline std::mt19937_64& rng() {
  static std::mt19937_64 gen(0x5eed'2013ULL);
  return gen;
}

inline double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng()); }
inline long long uniform_int(long long lo, long long hi) {
  return std::uniform_int_distribution<long long>(lo, hi)(rng());
}

}  // namespace rdis::test
