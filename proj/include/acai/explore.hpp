#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "acai/adversary.hpp"
#include "acai/simulator.hpp"

namespace acai {

struct Violation {
  std::string property;
  std::string witness;
  std::vector<std::string> path;  // actions after the setup, in order
};

struct ExploreOptions {
  std::size_t max_states = 4'000'000;
  bool stop_on_violation = false;
};

struct ExploreResult {
  std::vector<Violation> violations;  // first (shortest) witness per property
  std::size_t states = 0;             // distinct states reached, including the initial one
  std::size_t transitions = 0;
};

/// Breadth-first enumeration of every action sequence from `action_alphabet`
/// up to `depth`, deduplicated by state digest. Invariants are evaluated after
/// every transition; violating states are not expanded further.
Result<ExploreResult> explore(std::size_t depth, const ExploreConfig& cfg = {}, const Checks& checks = {},
                              const ExploreOptions& opts = {});

/// Bounds used by the fuzzer: larger than the exhaustive ones.
ExploreConfig fuzz_config();

struct FuzzResult {
  int exit_code = kExitOk;
  std::optional<Violation> violation;
  std::vector<TraceEvent> trace;
  std::vector<Digest> digests;  // state digest after each step
  std::size_t failed_actions = 0;
};

/// Seeded random walk over the action alphabet (three honest picks for
/// every adversarial one), checking invariants after each step.
FuzzResult fuzz(std::uint64_t seed, std::size_t steps, const ExploreConfig& cfg = fuzz_config(),
                const Checks& checks = {}, bool tracing = true);

struct DmaWorkload {
  std::size_t buffers = 3;
  std::size_t pages = 4;   // per buffer
  bool fragmented = false;  // interleave buffers so no two pages of one buffer are adjacent
  bool acai_opt = false;
};

/// Script for a realm whose driver protects `buffers` DMA buffers, issuing one
/// rsi_delegate_prot_mem per IPA-contiguous run, then DMAs into each buffer.
std::string workload_script(const DmaWorkload& w);

struct WorkloadResult {
  int exit_code = kExitOk;
  std::string message;
  std::size_t rsi_calls = 0;          // rsi_delegate_prot_mem, after activation
  std::size_t smc_delegations = 0;    // smc_delegate_prot_mem, after activation
  std::vector<TraceEvent> trace;
};

WorkloadResult run_dma_workload(const DmaWorkload& w);

}  // namespace acai
