#include "opflab/error.hpp"
#include "opflab/grid_io.hpp"

#include <algorithm>

namespace opflab {

std::size_t NetworkCase::reference_bus() const {
  for (std::size_t i = 0; i < buses.size(); ++i) {
    if (buses[i].is_reference) return i;
  }
  throw Error(ErrorCode::NoReferenceBus, "no reference bus in case " + name);
}

std::vector<DirectedLine> NetworkCase::directed_lines() const {
  std::vector<DirectedLine> lines;
  lines.reserve(num_lines());
  for (const Branch& br : branches) {
    lines.push_back({br.from, br.to, br.g, br.b, br.s_max, br.theta_delta});
    lines.push_back({br.to, br.from, br.g, br.b, br.s_max, br.theta_delta});
  }
  return lines;
}

std::vector<std::size_t> NetworkCase::load_buses() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < buses.size(); ++i) {
    if (p_load[i] != 0.0 || q_load[i] != 0.0) out.push_back(i);
  }
  return out;
}

std::vector<std::size_t> NetworkCase::generator_buses() const {
  std::vector<std::size_t> out;
  for (const Generator& g : generators) out.push_back(g.bus);
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

std::vector<std::vector<std::size_t>> NetworkCase::generators_at_bus() const {
  std::vector<std::vector<std::size_t>> out(buses.size());
  for (std::size_t k = 0; k < generators.size(); ++k) out[generators[k].bus].push_back(k);
  return out;
}

CaseDims NetworkCase::dims() const {
  return {num_buses(), load_buses().size(), generator_buses().size(), num_lines()};
}

}  // namespace opflab
