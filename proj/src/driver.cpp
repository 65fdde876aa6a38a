#include "aam/driver.hpp"

namespace aam {

namespace {

PermSet effective_universe(const Program& p, const AnalysisConfig& cfg) {
  return cfg.permissions.empty() ? p.mentioned_permissions() : cfg.permissions;
}

void require_supported(const Program& p, MachineTag tag) {
  std::string why;
  if (!family_supports(p, tag, &why)) throw Error(why);
}

}  // namespace

RunOutput run_machine(const Program& p, const AnalysisConfig& cfg) {
  require_supported(p, cfg.machine);
  if (cfg.gc && !is_pointer_family(cfg.machine) && cfg.machine != MachineTag::LkStar)
    throw Error("--gc needs a machine with store-allocated continuations");

  RunOutput out;
  switch (cfg.machine) {
    case MachineTag::Cek: {
      CekRun run = run_cek(p, cfg.fuel);
      out.flag = run.flag;
      out.steps = run.trace.size() - 1;
      for (const auto& s : run.trace) out.trace.push_back(render(s, p));
      return out;
    }
    case MachineTag::Cesk: {
      CeskRun run = run_cesk(p, cfg.fuel);
      out.flag = run.flag;
      out.steps = run.trace.size() - 1;
      for (const auto& s : run.trace) out.trace.push_back(render(s, p));
      return out;
    }
    case MachineTag::Lk: {
      LkRun run = run_lk(p, cfg.fuel);
      out.flag = run.flag;
      out.steps = run.trace.size() - 1;
      for (const auto& s : run.trace) out.trace.push_back(render_lk(s, p));
      return out;
    }
    case MachineTag::LkStar: {
      ConcretePolicy pol{cfg.policy};
      LkPtrRun run = run_lk_ptr(p, pol, cfg.fuel);
      out.flag = run.flag;
      out.steps = run.trace.size() - 1;
      for (const auto& s : run.trace) out.trace.push_back(render(s, p, cfg.machine));
      return out;
    }
    case MachineTag::Ceshk: {
      CeshkRun run = run_ceshk(p, cfg.fuel);
      out.flag = run.flag;
      out.steps = run.trace.size() - 1;
      for (const auto& s : run.trace) out.trace.push_back(render(s, p));
      return out;
    }
    case MachineTag::Cm: {
      CmRun run = run_cm(p, effective_universe(p, cfg), cfg.fuel);
      out.flag = run.flag;
      out.steps = run.trace.size() - 1;
      for (const auto& s : run.trace) out.trace.push_back(render(s, p));
      return out;
    }
    case MachineTag::CeskStar:
    case MachineTag::CeskStarT:
    case MachineTag::Extended: {
      ConcretePolicy pol{cfg.machine == MachineTag::CeskStar ? PolicyKind::Untimed : cfg.policy};
      PtrRun run =
          run_pointer(p, cfg.machine, pol, cfg.fuel, cfg.gc, effective_universe(p, cfg));
      out.flag = run.flag;
      out.steps = run.trace.size() - 1;
      for (const auto& s : run.trace) out.trace.push_back(render(s, p, cfg.machine));
      return out;
    }
  }
  throw Error("unreachable machine tag");
}

namespace {

MachineTag abstract_family(MachineTag t) {
  switch (t) {
    case MachineTag::Cek:
    case MachineTag::Cesk:
    case MachineTag::CeskStar:
    case MachineTag::CeskStarT:
      return MachineTag::CeskStarT;
    case MachineTag::Lk:
    case MachineTag::LkStar:
      return MachineTag::LkStar;
    default:
      return t;
  }
}

std::string abs_node_label(const AbsState& s, const Program& p) {
  std::string c =
      s.control.is_kont ? "#k" + render(s.control.kont, p) : "l" + std::to_string(s.control.expr);
  return c + " @ " + render(s.kont, p);
}

const char* abs_kind_name(AbsTerminal t) {
  switch (t) {
    case AbsTerminal::Value: return "value";
    case AbsTerminal::Stuck: return "stuck";
    case AbsTerminal::UncaughtThrow: return "uncaught-throw";
    case AbsTerminal::SecurityFailure: return "security-failure";
    default: return "";
  }
}

}  // namespace

AnalyzeOutput analyze_machine(const Program& p, const AnalysisConfig& cfg) {
  MachineTag tag = abstract_family(cfg.machine);
  require_supported(p, tag);
  if (cfg.widen && cfg.gc) throw Error("--gc cannot be combined with --widen global-store");
  PermSet universe = effective_universe(p, cfg);
  KCfaParams kcfa{cfg.k};
  StepParams prm{features_for(tag), universe};

  AnalyzeOutput out;
  if (cfg.widen) {
    WidenedResult w = analyze_widened(p, tag, kcfa, universe, cfg.variant);
    out.state_count = w.state_list.size();
    out.iterations = w.system.iterations;
    std::set<std::uint32_t> with_succ;
    for (auto [i, j] : w.edges) with_succ.insert(i);
    for (std::size_t i = 0; i < w.state_list.size(); i++) {
      AbsState full = with_store(w.state_list[i], w.system.store);
      out.graph.node_labels.push_back(abs_node_label(full, p));
      out.graph.node_details.push_back(render(full, p, tag));
      std::string kind;
      if (!with_succ.count(static_cast<std::uint32_t>(i))) {
        AbsTerminal t = classify_abs_terminal(p, full, prm);
        kind = abs_kind_name(t);
        if (t != AbsTerminal::Value && t != AbsTerminal::NotTerminal)
          out.has_error_terminals = true;
      }
      out.graph.node_kinds.push_back(kind);
    }
    out.graph.edges = w.edges;
    out.graph.facts = w.facts;
    out.graph.info["widen"] = "global-store";
    out.graph.info["iterations"] = std::to_string(w.system.iterations);
  } else {
    AnalysisResult r =
        analyze_reachable(p, tag, kcfa, cfg.gc, universe, cfg.shuffle_seed);
    out.state_count = r.states.size();
    std::set<std::uint32_t> with_succ;
    for (auto [i, j] : r.edges) with_succ.insert(i);
    for (std::size_t i = 0; i < r.states.size(); i++) {
      out.graph.node_labels.push_back(abs_node_label(r.states[i], p));
      out.graph.node_details.push_back(render(r.states[i], p, tag));
      std::string kind;
      if (!with_succ.count(static_cast<std::uint32_t>(i))) {
        AbsTerminal t = classify_abs_terminal(p, r.states[i], prm);
        kind = abs_kind_name(t);
        if (t != AbsTerminal::Value && t != AbsTerminal::NotTerminal)
          out.has_error_terminals = true;
      }
      out.graph.node_kinds.push_back(kind);
    }
    out.graph.edges = r.edges;
    out.graph.facts = r.facts;
    out.graph.initial = r.initial;
  }
  out.graph.info["machine"] = machine_tag_name(tag);
  out.graph.info["k"] = std::to_string(cfg.k);
  if (cfg.gc) out.graph.info["gc"] = "on";
  out.graph.info["states"] = std::to_string(out.state_count);
  return out;
}

GraphDoc graph_of_run(const Program&, const AnalysisConfig& cfg, const RunOutput& run) {
  GraphDoc g;
  for (std::size_t i = 0; i < run.trace.size(); i++) {
    g.node_labels.push_back("s" + std::to_string(i));
    g.node_details.push_back(run.trace[i]);
    g.node_kinds.push_back(i + 1 == run.trace.size() && run.flag == RunFlag::Final ? "value"
                                                                                   : "");
    if (i + 1 < run.trace.size())
      g.edges.emplace_back(static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(i + 1));
  }
  g.info["machine"] = machine_tag_name(cfg.machine);
  g.info["flag"] = run_flag_name(run.flag);
  return g;
}

LockstepReport check_lockstep_any(const Program& p, const AnalysisConfig& cfg) {
  if (is_lazy_family(cfg.machine)) return lockstep_lazy(p, cfg.fuel);
  return lockstep_check(p, cfg.fuel, cfg.policy);
}

GcAlgebraReport check_gc_algebra(const Program& p, const AnalysisConfig& cfg) {
  MachineTag tag = cfg.machine;
  if (!is_pointer_family(tag) && tag != MachineTag::LkStar) tag = MachineTag::CeskStarT;
  require_supported(p, tag);
  ConcretePolicy pol{cfg.policy};
  PermSet universe = effective_universe(p, cfg);
  StepParams prm{features_for(tag), universe};
  Features f = prm.features;
  bool lazy = tag == MachineTag::LkStar;

  auto do_step = [&](const PtrState& s) {
    return lazy ? step_lk_ptr(p, s, pol) : step_pointer(p, s, prm, pol);
  };

  GcAlgebraReport rep;
  PtrRun run = lazy ? run_lk_ptr(p, pol, cfg.fuel)
                    : run_pointer(p, tag, pol, cfg.fuel, false, universe);
  for (const PtrState& s : run.trace) {
    rep.states_checked++;
    PtrState once = collect(p, s, f);
    if (collect(p, once, f) != once) {
      rep.ok = false;
      rep.detail = "collection is not idempotent";
      return rep;
    }
    for (const auto& [a, st] : once.store.entries())
      if (!s.store.contains(a)) {
        rep.ok = false;
        rep.detail = "collection grew the store";
        return rep;
      }
    auto before = do_step(once);
    auto direct = do_step(s);
    if (before.has_value() != direct.has_value()) {
      rep.ok = false;
      rep.detail = "collection changed whether the machine can step";
      return rep;
    }
    if (direct) {
      PtrState lhs = canonicalize(p, collect(p, *before, f));
      PtrState rhs = canonicalize(p, collect(p, *direct, f));
      if (lhs != rhs) {
        rep.ok = false;
        rep.detail = "stepping a collected state and collecting a stepped state disagree";
        return rep;
      }
    }
  }
  return rep;
}

}  // namespace aam
