#pragma once

#include <string>
#include <utility>
#include <vector>

#include "acai/common.hpp"
#include "acai/monitor.hpp"
#include "acai/pcie_fabric.hpp"
#include "acai/rmm.hpp"
#include "acai/smmu.hpp"
#include "acai/world_memory.hpp"

namespace acai {

/// Enforcement checks that can be switched off one at a time to show the
/// invariant checkers are not vacuous. Production runs keep all of them on.
struct Checks {
  bool attestation = true;       // I1: reject unsigned device evidence
  bool attach_ownership = true;  // I2: one device per realm, one realm per device, locked config/BARs
  bool realm_stream = true;      // I3: hypervisor cannot touch realm stream translations
  bool double_map = true;        // I4: a PA backs at most one realm IPA
  bool pa_overlap = true;        // I5: a PA is reachable through at most one device
  friend bool operator==(const Checks&, const Checks&) = default;
};

struct PlatformConfig {
  std::size_t granules = 256;
  bool acai_opt = false;
  std::size_t max_realms = 16;
  Checks checks;
};

/// Number of top-of-memory granules the monitor reserves for SMMU structures.
inline constexpr std::size_t kReservedGranules = 3;

/// A nested operation or internal event recorded while a command runs.
struct JournalEvent {
  std::string actor;
  std::string op;
  std::vector<std::pair<std::string, std::string>> args;
  Err result = Err::None;
};

struct Platform {
  explicit Platform(const PlatformConfig& c = {})
      : cfg(c), mem(c.granules) {
    rmm_state.owners = ReversePaMap(c.granules);
  }

  PlatformConfig cfg;
  WorldMemory mem;
  Smmu smmu;
  PcieFabric fabric;
  MonitorState monitor_state;
  RmmState rmm_state;
  std::vector<JournalEvent> journal;

  void log(std::string actor, std::string op, std::vector<std::pair<std::string, std::string>> args = {},
           Err result = Err::None) {
    journal.push_back({std::move(actor), std::move(op), std::move(args), result});
  }

  /// Records a call before its nested events; `close` fills in the result.
  std::size_t open(std::string actor, std::string op, std::vector<std::pair<std::string, std::string>> args = {}) {
    log(std::move(actor), std::move(op), std::move(args));
    return journal.size() - 1;
  }
  Err close(std::size_t event, Err result) {
    journal[event].result = result;
    return result;
  }

  /// Restores all architectural state from `saved` but keeps the journal,
  /// so aborted operations stay visible in the trace.
  void rollback(const Platform& saved);

  void clear_observations();
};

/// SHA-256 over the canonical encoding of all architectural state.
Digest state_digest(const Platform& p);

std::string hex_addr(std::uint64_t v);

}  // namespace acai
