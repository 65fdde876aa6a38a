// Command-line front end: run concrete machines, compute abstract
// reachable-state graphs and flow facts, and check the machine algebra.
//
// Exit codes: 0 success; 1 the run or analysis found a program error
// (stuck/uncaught-throw/security-failure terminals) or a check failed;
// 2 usage or parse errors.

#include <CLI11.hpp>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include "aam/driver.hpp"

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw aam::Error("cannot open file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_output(const std::string& path, const std::string& text) {
  if (path.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream out(path);
  if (!out) throw aam::Error("cannot write file: " + path);
  out << text;
}

struct CommonOpts {
  std::string machine = "cesk-star-t";
  std::string file;
  std::size_t fuel = aam::kDefaultFuel;
  std::vector<std::string> permissions;
  std::string policy = "timed";
};

void add_common(CLI::App* cmd, CommonOpts& o) {
  cmd->add_option("--machine", o.machine,
                  "cek|cesk|cesk-star|cesk-star-t|lk|lk-star|extended|ceshk|cm")
      ->default_val(o.machine);
  cmd->add_option("--fuel", o.fuel, "step budget for concrete runs");
  cmd->add_option("--permissions", o.permissions, "permission universe")->delimiter(',');
  cmd->add_option("--policy", o.policy, "timed|untimed|timed24|contour");
  cmd->add_option("file", o.file, "program file (s-expression)")->required();
}

aam::AnalysisConfig config_of(const CommonOpts& o) {
  aam::AnalysisConfig cfg;
  auto tag = aam::machine_tag_from_name(o.machine);
  if (!tag) throw CLI::ValidationError("--machine", "unknown machine: " + o.machine);
  cfg.machine = *tag;
  cfg.fuel = o.fuel;
  cfg.permissions = aam::make_perm_set(o.permissions);
  if (o.policy == "timed")
    cfg.policy = aam::PolicyKind::Timed;
  else if (o.policy == "untimed")
    cfg.policy = aam::PolicyKind::Untimed;
  else if (o.policy == "timed24")
    cfg.policy = aam::PolicyKind::Timed24;
  else if (o.policy == "contour")
    cfg.policy = aam::PolicyKind::Contour;
  else
    throw CLI::ValidationError("--policy", "unknown policy: " + o.policy);
  if (const char* env = std::getenv("AAM_FUEL")) {
    if (o.fuel == aam::kDefaultFuel) cfg.fuel = static_cast<std::size_t>(std::stoull(env));
  }
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"abstract-machine runner and analyzer"};
  app.require_subcommand(1);
  app.set_config("--config");

  // run
  CommonOpts run_opts;
  bool run_gc = false, run_quiet = false;
  std::string run_out, run_format = "dot";
  CLI::App* run = app.add_subcommand("run", "run a concrete machine and print the trace");
  add_common(run, run_opts);
  run->add_flag("--gc", run_gc, "collect garbage after every transition");
  run->add_flag("--quiet", run_quiet, "suppress the state-per-line trace");
  run->add_option("--out", run_out, "write the trace graph to a file");
  run->add_option("--format", run_format, "dot|json")->default_val("dot");

  // analyze
  CommonOpts an_opts;
  an_opts.machine = "cesk";
  bool an_gc = false;
  unsigned an_k = 0;
  std::string an_widen, an_variant = "baseline", an_out, an_format = "json";
  CLI::App* an = app.add_subcommand("analyze", "compute the abstract reachable-state graph");
  add_common(an, an_opts);
  an->add_option("--k", an_k, "call-string depth")->default_val(0);
  an->add_flag("--gc", an_gc, "collect garbage after every abstract transition");
  an->add_option("--widen", an_widen, "global-store");
  an->add_option("--variant", an_variant, "baseline|optimized|postponed (lazy machines)");
  an->add_option("--out", an_out, "output file (default: stdout)");
  an->add_option("--format", an_format, "dot|json")->default_val("json");

  // check
  CommonOpts ck_opts;
  bool ck_lockstep = false, ck_soundness = false, ck_gc_algebra = false;
  unsigned ck_k = 0;
  CLI::App* ck = app.add_subcommand("check", "verify machine correspondences on a program");
  add_common(ck, ck_opts);
  ck->add_flag("--lockstep", ck_lockstep, "stepwise agreement of the machine tower");
  ck->add_flag("--soundness", ck_soundness, "abstract covering of the concrete trace");
  ck->add_flag("--gc-algebra", ck_gc_algebra, "collection idempotence and commutation");
  ck->add_option("--k", ck_k, "call-string depth for --soundness")->default_val(0);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (run->parsed()) {
      aam::AnalysisConfig cfg = config_of(run_opts);
      cfg.gc = run_gc;
      aam::Program p = aam::parse_program(read_file(run_opts.file));
      aam::RunOutput out = aam::run_machine(p, cfg);
      if (!run_quiet)
        for (const auto& line : out.trace) std::cout << line << "\n";
      std::cerr << run_flag_name(out.flag) << " after " << out.steps << " steps\n";
      if (!run_out.empty()) {
        aam::GraphDoc g = graph_of_run(p, cfg, out);
        write_output(run_out, run_format == "json" ? to_json(g) : to_dot(g));
      }
      bool error = out.flag == aam::RunFlag::Stuck || out.flag == aam::RunFlag::UncaughtThrow ||
                   out.flag == aam::RunFlag::SecurityFailure;
      return error ? 1 : 0;
    }
    if (an->parsed()) {
      if (!an_widen.empty() && an_widen != "global-store")
        throw CLI::ValidationError("--widen", "only global-store widening is available");
      aam::AnalysisConfig cfg = config_of(an_opts);
      cfg.k = an_k;
      cfg.gc = an_gc;
      cfg.widen = !an_widen.empty();
      auto variant = aam::lazy_variant_from_name(an_variant);
      if (!variant) throw CLI::ValidationError("--variant", "unknown variant: " + an_variant);
      cfg.variant = *variant;
      aam::Program p = aam::parse_program(read_file(an_opts.file));
      aam::AnalyzeOutput out = aam::analyze_machine(p, cfg);
      write_output(an_out, an_format == "json" ? to_json(out.graph) : to_dot(out.graph));
      std::cerr << out.state_count << " states";
      if (cfg.widen) std::cerr << ", " << out.iterations << " iterations";
      std::cerr << "\n";
      return out.has_error_terminals ? 1 : 0;
    }
    // check
    aam::AnalysisConfig cfg = config_of(ck_opts);
    cfg.k = ck_k;
    aam::Program p = aam::parse_program(read_file(ck_opts.file));
    if (!ck_lockstep && !ck_soundness && !ck_gc_algebra) ck_lockstep = true;
    bool all_ok = true;
    if (ck_lockstep) {
      aam::LockstepReport rep = check_lockstep_any(p, cfg);
      std::cout << "lockstep: " << (rep.agreed ? "ok" : "FAILED") << " (" << rep.steps
                << " steps, " << run_flag_name(rep.flag) << ")";
      if (!rep.agreed) std::cout << " " << rep.divergence;
      std::cout << "\n";
      all_ok &= rep.agreed;
    }
    if (ck_soundness) {
      aam::SoundnessReport rep =
          aam::check_soundness(p, cfg.machine, aam::KCfaParams{cfg.k}, cfg.fuel, cfg.permissions);
      std::cout << "soundness: " << (rep.ok ? "ok" : "FAILED") << " (" << rep.concrete_states
                << " concrete states, " << rep.abstract_states << " abstract)";
      if (!rep.ok) std::cout << " " << rep.violation;
      std::cout << "\n";
      all_ok &= rep.ok;
    }
    if (ck_gc_algebra) {
      aam::GcAlgebraReport rep = check_gc_algebra(p, cfg);
      std::cout << "gc-algebra: " << (rep.ok ? "ok" : "FAILED") << " (" << rep.states_checked
                << " states)";
      if (!rep.ok) std::cout << " " << rep.detail;
      std::cout << "\n";
      all_ok &= rep.ok;
    }
    return all_ok ? 0 : 1;
  } catch (const CLI::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const aam::ParseError& e) {
    std::cerr << "parse error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
