#pragma once

#include "opflab/grid_io.hpp"

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

namespace opflab {

/// One full operating point. p_g/q_g are per generator; p_d/q_d per bus.
struct GridState {
  std::vector<double> v;
  std::vector<double> theta;
  std::vector<double> p_g;
  std::vector<double> q_g;
  std::vector<double> p_d;
  std::vector<double> q_d;
};

/// Flat start: v = 1, theta = 0, dispatch at the midpoint of its bounds,
/// nominal loads.
GridState flat_state(const NetworkCase& net);

/// Throws DimensionMismatch if any array is not dimensioned to the case.
void check_dims(const GridState& state, const NetworkCase& net);

/// Per directed line, ordered as NetworkCase::directed_lines().
struct FlowSet {
  std::vector<double> p_f;
  std::vector<double> q_f;
};

struct LineFlow {
  double p = 0.0;
  double q = 0.0;
};

/// Branch flow leaving bus i toward bus j. No charging, taps or shunts.
LineFlow line_flow(double v_i, double v_j, double theta_i, double theta_j, double g, double b);

/// line_flow with first and second derivatives with respect to
/// (v_i, v_j, theta_i, theta_j).
struct LineFlowJet {
  LineFlow value;
  std::array<double, 4> dp{};
  std::array<double, 4> dq{};
  std::array<std::array<double, 4>, 4> hp{};
  std::array<std::array<double, 4>, 4> hq{};
};
LineFlowJet line_flow_jet(double v_i, double v_j, double theta_i, double theta_j, double g, double b);

FlowSet all_flows(const GridState& state, const NetworkCase& net);

/// Bus balance residuals:
///   res_p[i] = sum_{lines (ij) leaving i} p_f[ij] - (p_g at i - p_d[i])
/// with all generators at bus i aggregated. Likewise for reactive power.
struct KclResidual {
  std::vector<double> p;
  std::vector<double> q;
  double max_abs() const;
};
KclResidual kcl_residual(const GridState& state, const FlowSet& flows, const NetworkCase& net);

/// Active-power flow of the linear approximation.
inline double dc_flow(double theta_i, double theta_j, double b) { return -b * (theta_i - theta_j); }

double dispatch_cost(std::span<const double> p_g, const NetworkCase& net);

// ---------------------------------------------------------------------------
// Satisfiability and violation degrees
// ---------------------------------------------------------------------------

enum class Family : std::size_t {
  VoltageBounds = 0,   // 2a
  AngleDifference,     // 2b
  ActiveGeneration,    // 3a
  ReactiveGeneration,  // 3b
  FlowLimit,           // 4
  OhmActive,           // 5a
  OhmReactive,         // 5b
  KclActive,           // 6a
  KclReactive,         // 6b
};
inline constexpr std::size_t kNumFamilies = 9;
inline constexpr std::array<Family, kNumFamilies> kAllFamilies = {
    Family::VoltageBounds, Family::AngleDifference, Family::ActiveGeneration,
    Family::ReactiveGeneration, Family::FlowLimit, Family::OhmActive,
    Family::OhmReactive, Family::KclActive, Family::KclReactive};

/// Short tag used in reports: "2a", "2b", ..., "6b".
std::string_view family_tag(Family f);

struct ConstraintOptions {
  /// Flow limit as p^2 + q^2 <= s_max^2 instead of p^2 + q^2 <= s_max.
  bool squared_limit = false;
  /// Normalize the KCL violation by e and sum it over directed lines (each
  /// bus counted once per outgoing line) instead of the bus average.
  bool paper_exact_nu6 = false;
  /// Tolerance under which a violation degree counts as zero.
  double feasibility_tol = 1e-8;
};

/// Signed slacks. sigma <= 0 iff the underlying constraint holds; the Ohm and
/// KCL families are equalities (sigma == 0).
struct SatisfiabilityDegrees {
  std::vector<double> v_lo, v_hi;          // per bus
  std::vector<double> angle_lo, angle_hi;  // per directed line
  std::vector<double> p_lo, p_hi;          // per generator
  std::vector<double> q_lo, q_hi;          // per generator
  std::vector<double> flow_limit;          // per directed line
  std::vector<double> ohm_p, ohm_q;        // per directed line; empty without truth flows
  std::vector<double> kcl_p, kcl_q;        // per bus
};

/// `truth` carries the ground-truth flows needed by the Ohm families; pass
/// nullptr together with include_ohm = false to skip them.
SatisfiabilityDegrees satisfiability_degrees(const GridState& state, const FlowSet& flows,
                                             const FlowSet* truth, const NetworkCase& net,
                                             const ConstraintOptions& options = {},
                                             bool include_ohm = true);

/// Non-negative averaged violation per constraint family.
struct ViolationVector {
  std::array<double, kNumFamilies> nu{};

  double& operator[](Family f) { return nu[static_cast<std::size_t>(f)]; }
  double operator[](Family f) const { return nu[static_cast<std::size_t>(f)]; }
  double sum() const;
  double max() const;
  bool feasible(double tol) const { return max() <= tol; }
};

ViolationVector violation_degrees(const SatisfiabilityDegrees& sigma, const NetworkCase& net,
                                  const ConstraintOptions& options = {});

ViolationVector violation_degrees(const GridState& state, const FlowSet& flows, const FlowSet* truth,
                                  const NetworkCase& net, const ConstraintOptions& options = {},
                                  bool include_ohm = true);

}  // namespace opflab
