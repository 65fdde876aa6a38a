#pragma once

// Reachable-state graph emission: DOT for visualization, JSON with a stable
// schema: {"states": [...], "edges": [[i, j], ...], "flows": {...}} plus
// family-specific fact tables.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "aam/abstract.hpp"

namespace aam {

struct GraphDoc {
  std::vector<std::string> node_labels;   // short: control label @ kont address
  std::vector<std::string> node_details;  // full state rendering
  std::vector<std::string> node_kinds;    // "", "value", "stuck", ...
  std::vector<std::pair<std::uint32_t, std::uint32_t>> edges;
  FlowFacts facts;
  std::map<std::string, std::string> info;
  std::size_t initial = 0;
};

std::string to_dot(const GraphDoc& g);
std::string to_json(const GraphDoc& g);

}  // namespace aam
