#include "aam/emit.hpp"

#include <json.hpp>

namespace aam {

namespace {

std::string dot_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  return out;
}

}  // namespace

std::string to_dot(const GraphDoc& g) {
  std::string out = "digraph states {\n  rankdir=LR;\n  node [shape=box, fontname=\"monospace\"];\n";
  for (std::size_t i = 0; i < g.node_labels.size(); i++) {
    out += "  n" + std::to_string(i) + " [label=\"" + dot_escape(g.node_labels[i]) + "\"";
    if (i == g.initial) out += ", penwidth=2";
    const std::string& kind = g.node_kinds.size() > i ? g.node_kinds[i] : "";
    if (kind == "value")
      out += ", shape=doubleoctagon";
    else if (!kind.empty())
      out += ", color=red, xlabel=\"" + dot_escape(kind) + "\"";
    out += "];\n";
  }
  for (auto [i, j] : g.edges)
    out += "  n" + std::to_string(i) + " -> n" + std::to_string(j) + ";\n";
  return out + "}\n";
}

std::string to_json(const GraphDoc& g) {
  nlohmann::json j;
  j["states"] = nlohmann::json::array();
  for (std::size_t i = 0; i < g.node_labels.size(); i++) {
    nlohmann::json st;
    st["id"] = i;
    st["label"] = g.node_labels[i];
    if (g.node_details.size() > i) st["detail"] = g.node_details[i];
    if (g.node_kinds.size() > i && !g.node_kinds[i].empty()) st["terminal"] = g.node_kinds[i];
    j["states"].push_back(std::move(st));
  }
  j["edges"] = nlohmann::json::array();
  for (auto [a, b] : g.edges) j["edges"].push_back({a, b});
  j["initial"] = g.initial;

  nlohmann::json flows = nlohmann::json::object();
  for (const auto& [app, lams] : g.facts.applies)
    flows[std::to_string(app)] = std::vector<Label>(lams.begin(), lams.end());
  j["flows"] = std::move(flows);

  if (!g.facts.handles.empty()) {
    nlohmann::json t = nlohmann::json::object();
    for (const auto& [thr, catches] : g.facts.handles)
      t[std::to_string(thr)] = std::vector<Label>(catches.begin(), catches.end());
    j["throwFlows"] = std::move(t);
  }
  if (!g.facts.captures.empty()) {
    nlohmann::json t = nlohmann::json::object();
    for (const auto& [cc, points] : g.facts.captures)
      t[std::to_string(cc)] = std::vector<std::string>(points.begin(), points.end());
    j["callccCaptures"] = std::move(t);
  }
  if (!g.facts.test_branches.empty()) {
    nlohmann::json t = nlohmann::json::object();
    for (const auto& [test, branches] : g.facts.test_branches) {
      std::string verdict = branches.first && branches.second ? "both"
                            : branches.first                  ? "proves-enabled"
                                                              : "proves-disabled";
      t[std::to_string(test)] = verdict;
    }
    j["testBranches"] = std::move(t);
  }
  if (!g.facts.thunk_sites.empty()) {
    nlohmann::json t = nlohmann::json::object();
    for (Label site : g.facts.thunk_sites)
      t[std::to_string(site)] = g.facts.thunk_forced.count(site) ? "may-force" : "never-forced";
    j["thunks"] = std::move(t);
  }
  if (!g.info.empty()) j["info"] = g.info;
  return j.dump(2) + "\n";
}

}  // namespace aam
