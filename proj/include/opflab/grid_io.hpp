#pragma once

#include <cstddef>
#include <filesystem>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace opflab {

// ---------------------------------------------------------------------------
// Network description. Everything stored here is per-unit on base_mva, with
// angles in radians. Bus/branch/generator references are 0-based positions
// into NetworkCase::buses.
// ---------------------------------------------------------------------------

struct Bus {
  int number = 0;           // external bus number from the case file
  double v_min = 0.94;
  double v_max = 1.06;
  bool is_reference = false;
  double shunt_g = 0.0;     // parsed, not used by the flow model
  double shunt_b = 0.0;
};

struct Branch {
  std::size_t from = 0;
  std::size_t to = 0;
  double r = 0.0;
  double x = 0.0;
  double g = 0.0;            // (g, b) = (r, -x) / (r^2 + x^2)
  double b = 0.0;
  double s_max = 0.0;        // +inf when the case declares no rating
  double theta_delta = 0.0;  // |theta_i - theta_j| <= theta_delta
  double charging_b = 0.0;   // parsed, not used by the flow model
  double tap = 0.0;          // parsed, not used by the flow model
  double shift = 0.0;        // parsed, not used by the flow model
};

struct Generator {
  std::size_t bus = 0;
  double p_min = 0.0;
  double p_max = 0.0;
  double q_min = 0.0;
  double q_max = 0.0;
  double cost_c2 = 0.0;  // $/pu^2
  double cost_c1 = 0.0;  // $/pu
  double cost_c0 = 0.0;  // $
};

/// One orientation of a branch. A case with k branches has e = 2k directed
/// lines: index 2m is from->to of branch m and 2m+1 is to->from.
struct DirectedLine {
  std::size_t from = 0;
  std::size_t to = 0;
  double g = 0.0;
  double b = 0.0;
  double s_max = 0.0;
  double theta_delta = 0.0;
};

/// Sizes used throughout the learning pipeline: n buses, l load buses,
/// g generator buses, e directed lines.
struct CaseDims {
  std::size_t n = 0;
  std::size_t l = 0;
  std::size_t g = 0;
  std::size_t e = 0;

  bool operator==(const CaseDims&) const = default;
};

struct NetworkCase {
  std::string name;
  double base_mva = 100.0;
  std::vector<Bus> buses;
  std::vector<Branch> branches;
  std::vector<Generator> generators;
  std::vector<double> p_load;  // nominal active load per bus (pu)
  std::vector<double> q_load;  // nominal reactive load per bus (pu)

  std::size_t num_buses() const { return buses.size(); }
  std::size_t num_lines() const { return 2 * branches.size(); }
  std::size_t reference_bus() const;

  std::vector<DirectedLine> directed_lines() const;
  /// Buses with nonzero nominal active or reactive load, ascending.
  std::vector<std::size_t> load_buses() const;
  /// Distinct buses hosting at least one generator, ascending.
  std::vector<std::size_t> generator_buses() const;
  /// For every bus, the generators attached to it.
  std::vector<std::vector<std::size_t>> generators_at_bus() const;
  CaseDims dims() const;
};

struct ParseOptions {
  /// Angle-difference bound used when ANGMIN/ANGMAX are absent, zero, or
  /// declared unconstrained (|angle| >= 360 degrees).
  double default_theta_delta = std::numbers::pi / 6.0;
};

NetworkCase parse_matpower(std::string_view text, const ParseOptions& options = {});
NetworkCase load_matpower(const std::filesystem::path& path, const ParseOptions& options = {});

/// Writes the case back in MATPOWER units. Ignored quantities (shunts,
/// charging, taps) are preserved so that parse -> serialize -> parse is a
/// fixpoint.
std::string serialize_matpower(const NetworkCase& net);

double to_per_unit(double value_mw, double base_mva);
double from_per_unit(double value_pu, double base_mva);

// ---------------------------------------------------------------------------
// Datasets
// ---------------------------------------------------------------------------

/// One supervised pair, bus-indexed.
///   x = (p_d0, q_d0, p_g0, q_g0, v_0, theta_0, p_d, q_d)   8n values
///   y = (p_g, q_g, v, theta)                               4n values
/// Generator quantities are aggregated per bus.
struct Sample {
  std::vector<double> x;
  std::vector<double> y;

  bool operator==(const Sample&) const = default;
};

/// Block offsets inside Sample::x and Sample::y, in units of n.
enum class InputBlock : std::size_t { PdHot = 0, QdHot, PgHot, QgHot, VHot, ThetaHot, Pd, Qd };
enum class TargetBlock : std::size_t { Pg = 0, Qg, V, Theta };

std::span<const double> block(const Sample& s, InputBlock b, std::size_t n);
std::span<double> block(Sample& s, InputBlock b, std::size_t n);
std::span<const double> block(const Sample& s, TargetBlock b, std::size_t n);
std::span<double> block(Sample& s, TargetBlock b, std::size_t n);

/// A hot-start block is "unpaired" when all of it is zero.
bool has_hot_start(const Sample& s, std::size_t n);

struct Dataset {
  CaseDims dims;
  /// Pairing threshold in percent, recorded when the hot-start blocks were
  /// assigned; read_dataset rechecks it for every record.
  std::optional<double> delta_pct;
  std::vector<Sample> samples;
};

void write_dataset(const Dataset& data, const std::filesystem::path& path);
Dataset read_dataset(const std::filesystem::path& path);

/// Relative total-active-load gap used by the pairing threshold, in percent.
double hot_start_load_gap_pct(const Sample& s, std::size_t n);

}  // namespace opflab
