// acai: run scenario scripts, attack scenarios, fuzzing and bounded exploration.
#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <sstream>

#include "acai/explore.hpp"

namespace {

using namespace acai;

struct TraceSink {
  std::ofstream file;
  std::ostream* out = &std::cout;

  explicit TraceSink(const std::string& path) {
    if (path.empty()) return;
    file.open(path);
    out = &file;
  }
  void write(const std::vector<TraceEvent>& trace) {
    for (const auto& e : trace) *out << to_json_line(e) << '\n';
  }
};

std::optional<std::string> slurp(const std::string& path) {
  std::ifstream in(path);
  if (!in) return std::nullopt;
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

// Exploration bounds: `key=value` lines with realms, devices, granules, ipas,
// and `disable=<check>` to switch off one enforcement check.
std::optional<std::string> load_explore_config(const std::string& text, ExploreConfig& cfg, Checks& checks) {
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    std::istringstream toks(line);
    std::string tok;
    while (toks >> tok) {
      auto eq = tok.find('=');
      if (eq == std::string::npos) return "expected key=value, got '" + tok + "'";
      std::string key = tok.substr(0, eq);
      std::string value = tok.substr(eq + 1);
      if (key == "disable") {
        if (value == "attestation") checks.attestation = false;
        else if (value == "attach_ownership") checks.attach_ownership = false;
        else if (value == "realm_stream") checks.realm_stream = false;
        else if (value == "double_map") checks.double_map = false;
        else if (value == "pa_overlap") checks.pa_overlap = false;
        else return "unknown check '" + value + "'";
        continue;
      }
      auto n = parse_number(value);
      if (!n) return "bad number for " + key;
      if (key == "realms") cfg.realms = *n;
      else if (key == "devices") cfg.devices = *n;
      else if (key == "granules") cfg.granules = *n;
      else if (key == "ipas") cfg.ipas = *n;
      else return "unknown key '" + key + "'";
    }
  }
  return std::nullopt;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Confidential-accelerator platform simulator"};
  app.require_subcommand(1);
  app.fallthrough();  // global options may also follow the subcommand
  bool opt = false;
  std::string trace_path;
  app.add_flag("--opt", opt, "pre-map SMMU stage-2 entries at realm creation");
  app.add_option("--trace", trace_path, "write JSON Lines trace here instead of standard output");

  std::string script;
  std::string policy_dir;
  auto* run = app.add_subcommand("run", "execute a scenario script");
  run->add_option("script", script)->required();
  run->add_option("--policy-dir", policy_dir, "where verify looks for policy files (default: script directory)");

  std::size_t depth = 0;
  std::string config_path;
  auto* exp = app.add_subcommand("explore", "bounded exhaustive exploration");
  exp->add_option("--depth", depth)->required();
  exp->add_option("--config", config_path);

  std::uint64_t seed = 0;
  std::size_t steps = 0;
  auto* fz = app.add_subcommand("fuzz", "seeded random action sequences");
  fz->add_option("--seed", seed)->required();
  fz->add_option("--steps", steps)->required();

  auto* sc = app.add_subcommand("scenarios", "list attack scenarios");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : kExitParse;
  }

  if (run->parsed()) {
    auto text = slurp(script);
    if (!text) {
      std::cerr << "cannot read " << script << '\n';
      return kExitParse;
    }
    RunOptions ro;
    ro.platform.acai_opt = opt;
    if (policy_dir.empty()) {
      auto slash = script.find_last_of('/');
      policy_dir = slash == std::string::npos ? "." : script.substr(0, slash);
    }
    ro.policy_dir = policy_dir;
    RunResult r = run_script(*text, ro);
    TraceSink(trace_path).write(r.trace);
    std::cerr << r.message << '\n';
    return r.exit_code;
  }

  if (sc->parsed()) {
    for (const auto& s : attack_scenarios())
      std::cout << s.name << '\t' << to_string(s.actor) << '\t' << s.threat << '\n';
    return kExitOk;
  }

  if (exp->parsed()) {
    ExploreConfig cfg;
    Checks checks;
    if (!config_path.empty()) {
      auto text = slurp(config_path);
      if (!text) {
        std::cerr << "cannot read " << config_path << '\n';
        return kExitParse;
      }
      if (auto problem = load_explore_config(*text, cfg, checks)) {
        std::cerr << config_path << ": " << *problem << '\n';
        return kExitParse;
      }
    }
    auto r = explore(depth, cfg, checks);
    if (!r) {
      std::cerr << "explore: " << to_string(r.error()) << '\n';
      return kExitViolation;
    }
    std::cout << "states " << r->states << " transitions " << r->transitions << " violations "
              << r->violations.size() << '\n';
    for (const auto& v : r->violations) {
      std::cout << v.property << ": " << v.witness << '\n';
      for (const auto& step : v.path) std::cout << "  " << step << '\n';
    }
    return r->violations.empty() ? kExitOk : kExitViolation;
  }

  ExploreConfig cfg = fuzz_config();
  FuzzResult r = fuzz(seed, steps, cfg);
  TraceSink(trace_path).write(r.trace);
  if (r.violation) {
    std::cerr << r.violation->property << ": " << r.violation->witness << '\n';
    for (const auto& step : r.violation->path) std::cerr << "  " << step << '\n';
  }
  return r.exit_code;
}
