#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "acai/invariants.hpp"
#include "acai/platform.hpp"
#include "acai/script.hpp"

namespace acai {

inline constexpr int kExitOk = 0;
inline constexpr int kExitViolation = 2;
inline constexpr int kExitExpectation = 3;
inline constexpr int kExitParse = 4;

struct TraceEvent {
  std::uint64_t step = 0;
  std::string actor;
  std::string op;
  std::vector<std::pair<std::string, std::string>> args;
  std::string result;
  std::string state_digest;
};

/// One JSON object with exactly the fields step, actor, op, args, result, state_digest.
std::string to_json_line(const TraceEvent& e);

struct StepOutcome {
  Err error = Err::None;
  Bytes data;  // bytes returned by reads
};

/// The single-mutator kernel: every state change happens inside `step`,
/// which also evaluates all invariants and records trace events.
class Simulator {
 public:
  explicit Simulator(const PlatformConfig& cfg = {}, std::string policy_dir = ".", bool tracing = true);

  StepOutcome step(const Command& cmd);

  /// Executes a command without evaluating invariants, computing the digest
  /// or tracing. For callers that evaluate the state themselves.
  StepOutcome apply(const Command& cmd);

  const Platform& platform() const { return p_; }
  Platform& platform() { return p_; }
  const InvariantReport& last_report() const { return report_; }
  const Digest& last_digest() const { return digest_; }
  std::uint64_t steps() const { return step_; }
  const std::vector<TraceEvent>& trace() const { return trace_; }

  std::optional<VmId> realm(const std::string& name) const;
  const AttestationReport* report(const std::string& realm) const;

 private:
  StepOutcome dispatch(const Command& cmd);
  Result<VerifierPolicy> policy(const std::string& ref) const;

  Platform p_;
  std::string policy_dir_;
  bool tracing_;
  std::uint64_t step_ = 0;
  InvariantReport report_;
  Digest digest_{};
  std::vector<TraceEvent> trace_;
  std::map<std::string, AttestationReport> reports_;
  std::map<std::string, VerifierPolicy> policies_;
};

struct RunOptions {
  PlatformConfig platform;
  std::string policy_dir = ".";
};

struct RunResult {
  int exit_code = kExitOk;
  std::string message;
  std::vector<TraceEvent> trace;
  InvariantReport report;              // after the last executed step
  std::vector<StepOutcome> outcomes;   // one per executed command
};

RunResult run_script(std::string_view text, const RunOptions& opts = {});

/// Counts rmi_*, rsi_* and smc_* calls in a trace, optionally only from
/// `from_step` on.
std::map<std::string, std::size_t> count_interface_calls(const std::vector<TraceEvent>& trace,
                                                         std::uint64_t from_step = 0);

/// First step at which `op` succeeded, if any.
std::optional<std::uint64_t> first_step(const std::vector<TraceEvent>& trace, std::string_view op);

}  // namespace acai
