#include "acai/explore.hpp"

#include <random>
#include <set>
#include <unordered_set>

namespace acai {

namespace {

struct DigestHash {
  std::size_t operator()(const Digest& d) const {
    std::size_t h = 0;
    for (std::size_t i = 0; i < sizeof h; ++i) h = h << 8 | d[i];
    return h;
  }
};

std::vector<std::string> describe(const std::vector<AdversaryAction>& alphabet, const std::vector<std::uint32_t>& path) {
  std::vector<std::string> out;
  for (auto i : path) out.push_back(alphabet[i].cmd.text());
  return out;
}

}  // namespace

Result<ExploreResult> explore(std::size_t depth, const ExploreConfig& cfg, const Checks& checks,
                              const ExploreOptions& opts) {
  ExploreResult res;
  const auto alphabet = action_alphabet(cfg);
  Simulator root(explore_platform(cfg, checks), ".", false);
  for (const auto& cmd : explore_setup(cfg)) root.step(cmd);
  if (const Finding* f = root.last_report().first_failure()) {
    res.violations.push_back({f->property, f->witness, {}});
    return res;
  }

  std::unordered_set<Digest, DigestHash> seen{root.last_digest()};
  std::set<std::string> reported;
  res.states = 1;
  // Frontier nodes are stored as action paths and rebuilt by replay, which
  // keeps memory proportional to the number of states, not their size.
  std::vector<std::vector<std::uint32_t>> frontier{{}};
  for (std::size_t level = 1; level <= depth && !frontier.empty(); ++level) {
    std::vector<std::vector<std::uint32_t>> next;
    for (const auto& path : frontier) {
      Simulator base = root;
      for (auto i : path) base.apply(alphabet[i].cmd);
      for (std::uint32_t a = 0; a < alphabet.size(); ++a) {
        Simulator child = base;
        child.apply(alphabet[a].cmd);
        ++res.transitions;
        InvariantReport report = check_invariants(child.platform());
        if (!report.ok()) {
          auto witness_path = path;
          witness_path.push_back(a);
          for (const auto& f : report.findings) {
            if (f.pass || !reported.insert(f.property).second) continue;
            res.violations.push_back({f.property, f.witness, describe(alphabet, witness_path)});
          }
          if (opts.stop_on_violation) return res;
          continue;
        }
        if (!seen.insert(state_digest(child.platform())).second) continue;
        if (++res.states > opts.max_states) return Err::BudgetExceeded;
        if (level < depth) {
          next.push_back(path);
          next.back().push_back(a);
        }
      }
    }
    frontier = std::move(next);
  }
  return res;
}

ExploreConfig fuzz_config() { return {.realms = 3, .devices = 3, .granules = 24, .ipas = 4}; }

FuzzResult fuzz(std::uint64_t seed, std::size_t steps, const ExploreConfig& cfg, const Checks& checks, bool tracing) {
  FuzzResult res;
  const auto alphabet = action_alphabet(cfg);
  std::vector<std::uint32_t> honest;
  std::vector<std::uint32_t> adversarial;
  for (std::uint32_t i = 0; i < alphabet.size(); ++i)
    (alphabet[i].actor == Actor::Honest ? honest : adversarial).push_back(i);

  Simulator sim(explore_platform(cfg, checks), ".", tracing);
  for (const auto& cmd : explore_setup(cfg)) sim.step(cmd);
  std::mt19937_64 rng(seed);
  std::vector<std::uint32_t> path;
  for (std::size_t s = 0; s < steps && !alphabet.empty(); ++s) {
    const auto& pool = adversarial.empty() || (rng() % 4 != 0 && !honest.empty()) ? honest : adversarial;
    std::uint32_t pick = pool[rng() % pool.size()];
    path.push_back(pick);
    if (sim.step(alphabet[pick].cmd).error != Err::None) ++res.failed_actions;
    res.digests.push_back(sim.last_digest());
    if (const Finding* f = sim.last_report().first_failure()) {
      res.exit_code = kExitViolation;
      res.violation = Violation{f->property, f->witness, describe(alphabet, path)};
      break;
    }
  }
  res.trace = sim.trace();
  return res;
}

namespace {

constexpr std::uint64_t kWorkloadIpa = 0x100000;
constexpr std::uint64_t kWorkloadPa = 0x10000;  // first data granule

struct Slot {
  std::uint64_t ipa;
  std::uint64_t pa;
};

// Page j of buffer b. Contiguous: each buffer is one IPA run, buffers separated
// by a one-page gap. Fragmented: pages of all buffers interleave with a stride
// of two pages, so no two pages of a buffer touch in IPA or PA space.
Slot place(const DmaWorkload& w, std::size_t b, std::size_t j) {
  if (w.fragmented) {
    std::uint64_t slot = (j * w.buffers + b) * 2;
    return {kWorkloadIpa + slot * kGranuleSize, kWorkloadPa + slot * kGranuleSize};
  }
  std::uint64_t slot = b * (w.pages + 1) + j;
  return {kWorkloadIpa + slot * kGranuleSize, kWorkloadPa + (b * w.pages + j) * kGranuleSize};
}

std::size_t workload_granules(const DmaWorkload& w) {
  std::size_t data = 2 * w.buffers * w.pages + 16;
  return std::max<std::size_t>(256, data + 16 + kReservedGranules);
}

}  // namespace

std::string workload_script(const DmaWorkload& w) {
  std::string s;
  auto line = [&](const std::string& l) { s += l + "\n"; };
  line("plug 0x100 bars=1");
  line("mem hv write pa=0x0 data=a5a5a5a5");
  line("delegate 0x1000");
  line("delegate 0x2000");
  for (std::size_t b = 0; b < w.buffers; ++b)
    for (std::size_t j = 0; j < w.pages; ++j) line("delegate " + hex_addr(place(w, b, j).pa));
  line("realm_create worker");
  line("data_create worker src=0x0 dst=0x2000 ipa=0x80000");
  for (std::size_t b = 0; b < w.buffers; ++b)
    for (std::size_t j = 0; j < w.pages; ++j) {
      Slot pg = place(w, b, j);
      line("data_create worker src=0x0 dst=" + hex_addr(pg.pa) + " ipa=" + hex_addr(pg.ipa));
    }
  line("data_create worker src=0x0 dst=0x1000 ipa=0x90000 attach_dev dev=0x100 bars=0x80000:4096");
  line("activate worker");
  for (std::size_t b = 0; b < w.buffers; ++b) {
    // The driver protects each IPA-contiguous run of the buffer with one call.
    std::vector<std::pair<std::uint64_t, std::uint64_t>> runs;
    for (std::size_t j = 0; j < w.pages; ++j) {
      std::uint64_t ipa = place(w, b, j).ipa;
      if (!runs.empty() && runs.back().first + runs.back().second == ipa)
        runs.back().second += kGranuleSize;
      else
        runs.emplace_back(ipa, kGranuleSize);
    }
    for (const auto& [ipa, size] : runs)
      line("prot_mem worker dev=0x100 sg=" + hex_addr(ipa) + ":" + std::to_string(size));
  }
  for (std::size_t b = 0; b < w.buffers; ++b)
    line("dma 0x100 write ipa=" + hex_addr(place(w, b, 0).ipa) + " len=16");
  return s;
}

WorkloadResult run_dma_workload(const DmaWorkload& w) {
  RunOptions opts;
  opts.platform.granules = workload_granules(w);
  opts.platform.acai_opt = w.acai_opt;
  RunResult run = run_script(workload_script(w), opts);
  WorkloadResult res;
  res.exit_code = run.exit_code;
  res.message = run.message;
  auto activated = first_step(run.trace, "activate");
  auto counts = count_interface_calls(run.trace, activated.value_or(0));
  res.rsi_calls = counts["rsi_delegate_prot_mem"];
  res.smc_delegations = counts["smc_delegate_prot_mem"];
  res.trace = std::move(run.trace);
  return res;
}

}  // namespace acai
