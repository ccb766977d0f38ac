#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "acai/common.hpp"
#include "acai/pcie_fabric.hpp"
#include "acai/translation_cache.hpp"

namespace acai {

struct Platform;

enum class RealmState : std::uint8_t { New, Active };

struct BarRegion {
  Ipa ipa;
  std::uint64_t size = 0;  // bytes
  friend bool operator==(const BarRegion&, const BarRegion&) = default;
};

struct SgEntry {
  Ipa ipa;
  std::uint64_t size = 0;  // bytes, a positive multiple of the granule size
  friend bool operator==(const SgEntry&, const SgEntry&) = default;
};
using ScatterGatherList = std::vector<SgEntry>;

/// Granule-aligned IPAs covered by `sg`, in list order.
Result<std::vector<Ipa>> expand(const ScatterGatherList& sg);

enum class LogKind : std::uint8_t {
  Data,          // plain rmi_data_create
  DeviceConfig,  // rmi_data_create with attach_dev: the config-space granule
  SmmuPremap,    // ACAI_opt: SMMU stage-2 entry installed at creation time
};

std::string_view to_string(LogKind k);

struct DataLogEntry {
  LogKind kind = LogKind::Data;
  Ipa ipa;
  Digest content{};
  bool attach_dev = false;
  BusAddr bus;
  std::vector<BarRegion> bars;
  friend bool operator==(const DataLogEntry&, const DataLogEntry&) = default;
};

/// rim' = SHA-256(rim || entry), entry serialized little-endian in field order.
Digest extend_measurement(const Digest& rim, const DataLogEntry& entry);
Digest replay_measurement(const std::vector<DataLogEntry>& log);

struct AttachParams {
  BusAddr bus;
  std::vector<BarRegion> bars;
};

struct RealmVm {
  VmId vmid;
  std::string name;
  RealmState state = RealmState::New;
  std::map<Ipa, Pa> stage2;
  Digest rim{};
  std::vector<DataLogEntry> log;
  KeyId mec_key;
  bool attach_requested = false;
  std::optional<StreamId> attached_device;
  std::optional<Ipa> config_ipa;
  std::vector<BarRegion> bars;
  std::optional<DeviceReport> device_report;  // evidence returned at attach

  friend bool operator==(const RealmVm&, const RealmVm&) = default;
};

/// Who maps each physical granule: at most one realm and one device stream
/// when the platform is sound.
class ReversePaMap {
 public:
  explicit ReversePaMap(std::size_t granules = 0) : realm_(granules), device_(granules) {}

  std::optional<VmId> realm(Pa pa) const { return realm_.at(idx(pa)); }
  std::optional<StreamId> device(Pa pa) const { return device_.at(idx(pa)); }
  void set_realm(Pa pa, std::optional<VmId> vm) { realm_.at(idx(pa)) = vm; }
  void set_device(Pa pa, std::optional<StreamId> sid) { device_.at(idx(pa)) = sid; }
  bool mapped(Pa pa) const { return realm(pa) || device(pa); }
  std::size_t size() const { return realm_.size(); }

  friend bool operator==(const ReversePaMap&, const ReversePaMap&) = default;

 private:
  static std::size_t idx(Pa pa) { return pa.value / kGranuleSize; }
  std::vector<std::optional<VmId>> realm_;
  std::vector<std::optional<StreamId>> device_;
};

struct CoreTlbKey {
  VmId vmid;
  Ipa ipa;
  friend auto operator<=>(const CoreTlbKey&, const CoreTlbKey&) = default;
};

struct RmmState {
  std::map<VmId, RealmVm> realms;
  std::uint64_t next_vmid = 0;
  ReversePaMap owners;
  TranslationCache<CoreTlbKey> core_tlb;

  RealmVm* find(VmId vm);
  const RealmVm* find(VmId vm) const;
  const RealmVm* find(std::string_view name) const;

  void encode(ByteWriter& w) const;
};

struct DeviceSection {
  DeviceReport evidence;
  bool challenge_ok = false;  // fresh challenge answered over the realm's IDE stream
  friend bool operator==(const DeviceSection&, const DeviceSection&) = default;
};

struct AttestationReport {
  Digest realm_measurement{};
  std::vector<DataLogEntry> data_log;
  std::optional<DeviceSection> device_section;
  std::vector<BarRegion> bar_layout;
  friend bool operator==(const AttestationReport&, const AttestationReport&) = default;
};

/// What a remote verifier expects of a realm and its accelerator.
struct VerifierPolicy {
  std::optional<Digest> realm_measurement;
  bool device_required = false;
  std::optional<Digest> firmware;
  bool debug_disabled = true;
  std::optional<std::vector<std::uint32_t>> bars;  // expected BAR sizes in granules
};

/// Parses `key=value` lines: realm_measurement=<hex>, device=required|none,
/// firmware=<label>, debug_disabled=true|false, bars=<n>,<n>...
Result<VerifierPolicy> parse_policy(std::string_view text);

struct Verdict {
  bool pass = true;
  Err reason = Err::None;
};

Verdict verify_report(const AttestationReport& report, const VerifierPolicy& policy);

namespace rmm {

Result<VmId> rmi_realm_create(Platform& p, const std::string& name);
Status rmi_granule_delegate(Platform& p, Pa pa);
Status rmi_granule_undelegate(Platform& p, Pa pa);
Status rmi_data_create(Platform& p, VmId vm, Pa src, Pa dst, Ipa ipa, const std::optional<AttachParams>& attach);
Status rmi_realm_activate(Platform& p, VmId vm);
Status rmi_realm_destroy(Platform& p, VmId vm);
Status rsi_delegate_prot_mem(Platform& p, VmId vm, const ScatterGatherList& sg, StreamId device);
Result<AttestationReport> attestation_report(Platform& p, VmId vm, std::uint64_t nonce);

/// Realm core translation through the RMM stage-2 table (with core TLB).
Result<Pa> core_translate(Platform& p, VmId vm, Ipa ipa);

}  // namespace rmm

}  // namespace acai
