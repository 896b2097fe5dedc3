#pragma once

#include "opflab/grid_io.hpp"

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>

namespace opflab::testing {

inline std::filesystem::path data_path(const std::string& name) {
  return std::filesystem::path(OPFLAB_DATA_DIR) / name;
}

inline std::filesystem::path scratch_dir(const std::string& tag) {
  auto dir = std::filesystem::temp_directory_path() / ("opflab_test_" + tag);
  std::filesystem::create_directories(dir);
  return dir;
}

/// Small seeded generator for property tests.
class Gen {
 public:
  explicit Gen(std::uint64_t seed) : rng_(seed) {}
  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }
  int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }
  std::mt19937_64& engine() { return rng_; }

 private:
  std::mt19937_64 rng_;
};

/// MATPOWER text for a two-bus case: bus 1 reference with a generator, bus 2
/// a load, one branch.
inline std::string two_bus_text(double r, double x, double rate_mva = 0.0, double load_mw = 50.0,
                                double load_mvar = 10.0) {
  return "function mpc = two_bus\n"
         "mpc.version = '2';\n"
         "mpc.baseMVA = 100;\n"
         "mpc.bus = [\n"
         "  1 3 0 0 0 0 1 1 0 135 1 1.1 0.9;\n"
         "  2 1 " + std::to_string(load_mw) + " " + std::to_string(load_mvar) +
         " 0 0 1 1 0 135 1 1.1 0.9;\n"
         "];\n"
         "mpc.gen = [\n"
         "  1 0 0 100 -100 1 100 1 200 0;\n"
         "];\n"
         "mpc.branch = [\n"
         "  1 2 " + std::to_string(r) + " " + std::to_string(x) + " 0 " + std::to_string(rate_mva) +
         " 0 0 0 0 1 -30 30;\n"
         "];\n"
         "mpc.gencost = [\n"
         "  2 0 0 3 0.01 10 0;\n"
         "];\n";
}

}  // namespace opflab::testing
