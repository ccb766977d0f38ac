#pragma once

#include <array>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <variant>

#include "acai/common.hpp"
#include "acai/pcie_fabric.hpp"

namespace acai {

struct Platform;

/// One realm device binding. Serialized into a single 64-bit word:
/// stream id (16 bits), vmid (16), config-space granule index (24), BAR count (8).
/// The requester id equals the stream id, so it is not stored twice.
struct RegistryEntry {
  StreamId sid;
  VmId vmid;
  Pa config_pa;
  std::uint8_t bar_count = 0;

  Rid rid() const { return Rid{sid.value}; }

  std::array<std::uint8_t, 8> pack() const;
  static RegistryEntry unpack(const std::array<std::uint8_t, 8>& word);
  friend bool operator==(const RegistryEntry&, const RegistryEntry&) = default;
};

class RealmDeviceRegistry {
 public:
  const RegistryEntry* find(StreamId sid) const;
  const RegistryEntry* find_vm(VmId vm) const;
  bool contains(StreamId sid) const { return entries_.contains(sid); }
  void insert(const RegistryEntry& e) { entries_[e.sid] = e; }
  void erase(StreamId sid) { entries_.erase(sid); }
  const std::map<StreamId, RegistryEntry>& entries() const { return entries_; }

  friend bool operator==(const RealmDeviceRegistry&, const RealmDeviceRegistry&) = default;

 private:
  std::map<StreamId, RegistryEntry> entries_;
};

/// Configuration fields the hypervisor may write for non-realm streams.
const std::set<std::string>& smmu_allow_list();
/// Fields that exist but are never writable by the hypervisor.
const std::set<std::string>& smmu_denied_fields();

struct SmmuMapRequest {
  StreamId sid;
  Ipa ipa;
  Pa pa;
};
struct SmmuUnmapRequest {
  StreamId sid;
  Ipa ipa;
};
struct SmmuConfigRequest {
  std::string field;
  std::uint64_t value = 0;
};
struct SmmuAtsRequest {
  StreamId sid;
};
using SmmuHypRequest = std::variant<SmmuMapRequest, SmmuUnmapRequest, SmmuConfigRequest, SmmuAtsRequest>;

struct MonitorState {
  RealmDeviceRegistry registry;
  bool stream_table_locked = false;
  bool booted = false;
  std::uint64_t next_ide_key = 1;

  void encode(ByteWriter& w) const;
};

namespace monitor {

/// Hands the SMMU data structures to the root world and configures the SMMU.
void boot_init(Platform& p);

/// Monitor-mediated GPT change; flushes every translation cache.
Status set_world(Platform& p, Pa pa, World world);

Result<DeviceReport> smc_device_attach(Platform& p, VmId vm, BusAddr bus, Pa config_pa, std::uint8_t bar_count);
Status smc_device_detach(Platform& p, VmId vm);
Status smc_delegate_prot_mem(Platform& p, VmId vm, StreamId sid, Ipa ipa, Pa pa);
Status smc_smmu_request(Platform& p, const SmmuHypRequest& req);

/// SPDM challenge of an attached device over its IDE stream.
Result<DeviceReport> challenge_device(Platform& p, StreamId sid, std::uint64_t nonce);

}  // namespace monitor

}  // namespace acai
