#include "acai/rmm.hpp"

#include <algorithm>
#include <sstream>

#include "acai/monitor.hpp"
#include "acai/platform.hpp"

namespace acai {

Result<std::vector<Ipa>> expand(const ScatterGatherList& sg) {
  std::vector<Ipa> out;
  for (const auto& e : sg) {
    if (!granule_aligned(e.ipa.value) || e.size == 0 || !granule_aligned(e.size)) return Err::InvalidArgument;
    for (std::uint64_t off = 0; off < e.size; off += kGranuleSize) out.push_back(Ipa{e.ipa.value + off});
  }
  return out;
}

std::string_view to_string(LogKind k) {
  switch (k) {
    case LogKind::Data: return "data";
    case LogKind::DeviceConfig: return "device_config";
    case LogKind::SmmuPremap: return "smmu_premap";
  }
  return "?";
}

Digest extend_measurement(const Digest& rim, const DataLogEntry& e) {
  ByteWriter w;
  w.digest(rim);
  w.u8(static_cast<std::uint8_t>(e.kind));
  w.u64(e.ipa.value);
  w.digest(e.content);
  w.boolean(e.attach_dev);
  w.u64(e.bus.value);
  w.u32(static_cast<std::uint32_t>(e.bars.size()));
  for (const auto& b : e.bars) {
    w.u64(b.ipa.value);
    w.u64(b.size);
  }
  return sha256(w.data());
}

Digest replay_measurement(const std::vector<DataLogEntry>& log) {
  Digest rim{};
  for (const auto& e : log) rim = extend_measurement(rim, e);
  return rim;
}

RealmVm* RmmState::find(VmId vm) {
  auto it = realms.find(vm);
  return it == realms.end() ? nullptr : &it->second;
}

const RealmVm* RmmState::find(VmId vm) const {
  auto it = realms.find(vm);
  return it == realms.end() ? nullptr : &it->second;
}

const RealmVm* RmmState::find(std::string_view name) const {
  for (const auto& [vm, r] : realms)
    if (r.name == name) return &r;
  return nullptr;
}

void RmmState::encode(ByteWriter& w) const {
  w.u64(next_vmid);
  w.u32(static_cast<std::uint32_t>(realms.size()));
  for (const auto& [vm, r] : realms) {
    w.u64(vm.value);
    w.str(r.name);
    w.u8(static_cast<std::uint8_t>(r.state));
    w.u32(static_cast<std::uint32_t>(r.stage2.size()));
    for (const auto& [ipa, pa] : r.stage2) {
      w.u64(ipa.value);
      w.u64(pa.value);
    }
    w.digest(r.rim);
    w.u64(r.mec_key.value);
    w.boolean(r.attach_requested);
    w.u64(r.attached_device ? r.attached_device->value + 1 : 0);
    w.u64(r.config_ipa ? r.config_ipa->value + 1 : 0);
    w.u32(static_cast<std::uint32_t>(r.bars.size()));
    for (const auto& b : r.bars) {
      w.u64(b.ipa.value);
      w.u64(b.size);
    }
    w.boolean(r.device_report.has_value());
    if (r.device_report) w.digest(r.device_report->signature);
  }
  for (std::size_t i = 0; i < owners.size(); ++i) {
    Pa pa{i * kGranuleSize};
    w.u64(owners.realm(pa) ? owners.realm(pa)->value + 1 : 0);
    w.u64(owners.device(pa) ? owners.device(pa)->value + 1 : 0);
  }
  w.u32(static_cast<std::uint32_t>(core_tlb.size()));
  for (const auto& [k, e] : core_tlb.entries()) {
    w.u64(k.vmid.value);
    w.u64(k.ipa.value);
    w.u64(e.pa.value);
  }
}

namespace {

std::optional<bool> parse_bool(std::string_view v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  return std::nullopt;
}

std::optional<Digest> parse_digest(std::string_view v) {
  auto bytes = from_hex(v);
  if (!bytes || bytes->size() != 32) return std::nullopt;
  Digest d{};
  std::copy(bytes->begin(), bytes->end(), d.begin());
  return d;
}

}  // namespace

Result<VerifierPolicy> parse_policy(std::string_view text) {
  VerifierPolicy policy;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream tokens(line);
    std::string tok;
    while (tokens >> tok) {
      auto eq = tok.find('=');
      if (eq == std::string::npos) return Err::ParseError;
      std::string key = tok.substr(0, eq);
      std::string value = tok.substr(eq + 1);
      if (key == "realm_measurement") {
        auto d = parse_digest(value);
        if (!d) return Err::ParseError;
        policy.realm_measurement = d;
      } else if (key == "device") {
        if (value != "required" && value != "none") return Err::ParseError;
        policy.device_required = value == "required";
      } else if (key == "firmware") {
        policy.firmware = sha256(value);
      } else if (key == "firmware_digest") {
        auto d = parse_digest(value);
        if (!d) return Err::ParseError;
        policy.firmware = d;
      } else if (key == "debug_disabled") {
        auto b = parse_bool(value);
        if (!b) return Err::ParseError;
        policy.debug_disabled = *b;
      } else if (key == "bars") {
        std::vector<std::uint32_t> bars;
        std::istringstream list(value);
        std::string item;
        while (std::getline(list, item, ',')) {
          if (item.empty() || item.find_first_not_of("0123456789") != std::string::npos) return Err::ParseError;
          bars.push_back(static_cast<std::uint32_t>(std::stoul(item)));
        }
        policy.bars = std::move(bars);
      } else {
        return Err::ParseError;
      }
    }
  }
  return policy;
}

Verdict verify_report(const AttestationReport& report, const VerifierPolicy& policy) {
  auto fail = [](Err e) { return Verdict{false, e}; };
  const auto& dev = report.device_section;
  if (policy.device_required && !dev) return fail(Err::NoDeviceSection);
  if (dev) {
    if (!verify_device_signature(dev->evidence)) return fail(Err::BadSignature);
    if (!dev->challenge_ok) return fail(Err::ChallengeFailed);
  }
  if (policy.realm_measurement && *policy.realm_measurement != report.realm_measurement)
    return fail(Err::MeasurementMismatch);
  if (replay_measurement(report.data_log) != report.realm_measurement) return fail(Err::MeasurementMismatch);
  if (!dev) return {};
  if (policy.firmware && *policy.firmware != dev->evidence.firmware_digest) return fail(Err::FirmwareMismatch);
  if (policy.debug_disabled && !dev->evidence.debug_disabled) return fail(Err::DebugEnabled);
  if (policy.bars) {
    const auto& want = *policy.bars;
    const auto& got = report.bar_layout;
    for (std::size_t i = 0; i < want.size(); ++i) {
      if (i >= got.size()) return fail(Err::BarNotProtected);
      if (got[i].size != static_cast<std::uint64_t>(want[i]) * kGranuleSize) return fail(Err::BarMismatch);
    }
    if (got.size() > want.size()) return fail(Err::BarMismatch);
    // The device's own configuration space must declare the same layout.
    Page expected;
    expected.assign(config_space_image(dev->evidence.rid, want, dev->evidence.firmware_digest));
    if (expected.digest() != dev->evidence.config_digest) return fail(Err::BarMismatch);
  }
  return {};
}

namespace rmm {

namespace {

std::string hex(std::uint64_t v) { return hex_addr(v); }

bool range_ok(const Platform& p, Pa pa) { return p.mem.in_range(pa) && granule_aligned(pa.value); }

const AccessorCtx kMonitor = AccessorCtx::monitor();

AccessorCtx realm_ctx(const RealmVm& r) { return AccessorCtx::realm_core(r.vmid, r.mec_key); }

Status reclaim(Platform& p, Pa pa) {
  if (auto st = p.mem.scrub(pa, kMonitor); !st) return st;
  return monitor::set_world(p, pa, World::Normal);
}

// ACAI_opt: install the SMMU stage-2 entry for a data granule at creation
// time and record the fact in the measurement.
Err premap(Platform& p, VmId vm, Ipa ipa, Pa pa) {
  RealmVm* r = p.rmm_state.find(vm);
  StreamId sid = *r->attached_device;
  if (auto st = monitor::smc_delegate_prot_mem(p, vm, sid, ipa, pa); !st) return st.error();
  r = p.rmm_state.find(vm);
  DataLogEntry e{LogKind::SmmuPremap, ipa, Digest{}, false, bus_of(sid), {}};
  r->log.push_back(e);
  r->rim = extend_measurement(r->rim, e);
  return Err::None;
}

bool in_bar(const RealmVm& r, Ipa ipa) {
  return std::any_of(r.bars.begin(), r.bars.end(), [&](const BarRegion& b) {
    return ipa.value >= b.ipa.value && ipa.value < b.ipa.value + b.size;
  });
}

Err data_create(Platform& p, VmId vm, Pa src, Pa dst, Ipa ipa, const std::optional<AttachParams>& attach) {
  const Checks& checks = p.cfg.checks;
  RealmVm* r = p.rmm_state.find(vm);
  if (r == nullptr) return Err::UnknownVm;
  if (r->state != RealmState::New) return Err::RealmActive;
  if (!range_ok(p, src) || !range_ok(p, dst)) return Err::OutOfRange;
  if (!granule_aligned(ipa.value)) return Err::InvalidArgument;
  if (p.mem.world_of(src) != World::Normal) return Err::WrongWorld;
  if (p.mem.world_of(dst) != World::Realm) {
    if (!attach) return Err::WrongWorld;
    if (checks.attach_ownership) return Err::ConfigNotRealm;
  }
  if (checks.double_map && p.rmm_state.owners.realm(dst)) return Err::DoubleMap;
  if (r->stage2.contains(ipa)) return Err::IpaInUse;
  if (attach) {
    if (attach->bars.size() > kMaxBars) return Err::InvalidArgument;
    if (checks.attach_ownership && r->attached_device) return Err::VmAlreadyHasDevice;
  }

  const Platform saved = p;
  auto abort = [&](Err e) {
    p.rollback(saved);
    if (attach) p.rmm_state.find(vm)->attach_requested = true;
    return e;
  };

  auto contents = p.mem.read(AccessorCtx{AccessorKind::Core, World::Realm, vm, r->mec_key}, src, kGranuleSize);
  if (!contents) return abort(contents.error());
  if (auto st = p.mem.write(realm_ctx(*r), dst, *contents); !st) return abort(st.error());
  r->stage2[ipa] = dst;
  p.rmm_state.owners.set_realm(dst, vm);
  p.rmm_state.core_tlb.invalidate(CoreTlbKey{vm, ipa});

  if (!attach) {
    DataLogEntry e{LogKind::Data, ipa, sha256(*contents), false, BusAddr{}, {}};
    r->log.push_back(e);
    r->rim = extend_measurement(r->rim, e);
    if (p.cfg.acai_opt && r->attached_device) {
      if (Err e2 = premap(p, vm, ipa, dst); e2 != Err::None) return abort(e2);
    }
    return Err::None;
  }

  r->attach_requested = true;
  if (checks.attach_ownership) {
    for (const auto& bar : attach->bars) {
      if (!granule_aligned(bar.ipa.value) || bar.size == 0 || !granule_aligned(bar.size)) return abort(Err::InvalidArgument);
      for (std::uint64_t off = 0; off < bar.size; off += kGranuleSize)
        if (!r->stage2.contains(Ipa{bar.ipa.value + off})) return abort(Err::BarNotMapped);
    }
  }
  auto report = monitor::smc_device_attach(p, vm, attach->bus, dst, static_cast<std::uint8_t>(attach->bars.size()));
  if (!report) return abort(report.error());

  r = p.rmm_state.find(vm);
  r->attached_device = stream_of(attach->bus);
  r->config_ipa = ipa;
  r->bars = attach->bars;
  r->device_report = *report;
  auto config = p.mem.read(realm_ctx(*r), dst, kGranuleSize);
  if (!config) return abort(config.error());
  DataLogEntry e{LogKind::DeviceConfig, ipa, sha256(*config), true, attach->bus, attach->bars};
  r->log.push_back(e);
  r->rim = extend_measurement(r->rim, e);

  if (p.cfg.acai_opt) {
    std::vector<std::pair<Ipa, Pa>> data;
    for (const auto& [i, pa] : r->stage2)
      if (i != ipa && !in_bar(*r, i)) data.emplace_back(i, pa);
    for (const auto& [i, pa] : data)
      if (Err e2 = premap(p, vm, i, pa); e2 != Err::None) return abort(e2);
  }
  return Err::None;
}

}  // namespace

Result<VmId> rmi_realm_create(Platform& p, const std::string& name) {
  auto ev = p.open("hypervisor", "rmi_realm_create", {{"name", name}});
  auto& st = p.rmm_state;
  if (st.find(name) != nullptr || st.realms.size() >= p.cfg.max_realms || st.next_vmid > 0xffff)
    return p.close(ev, Err::ResourceExhausted);
  VmId vm{st.next_vmid++};
  RealmVm r;
  r.vmid = vm;
  r.name = name;
  r.mec_key = KeyId{0x100 + vm.value};
  st.realms.emplace(vm, std::move(r));
  p.journal[ev].args.emplace_back("vmid", std::to_string(vm.value));
  p.close(ev, Err::None);
  return vm;
}

Status rmi_granule_delegate(Platform& p, Pa pa) {
  auto ev = p.open("hypervisor", "rmi_granule_delegate", {{"pa", hex(pa.value)}});
  if (!range_ok(p, pa)) return p.close(ev, Err::OutOfRange);
  if (p.rmm_state.owners.mapped(pa)) return p.close(ev, Err::StillMapped);
  if (p.mem.world_of(pa) != World::Normal) return p.close(ev, Err::WrongWorld);
  if (auto st = monitor::set_world(p, pa, World::Realm); !st) return p.close(ev, st.error());
  return p.close(ev, p.mem.scrub(pa, kMonitor).error());
}

Status rmi_granule_undelegate(Platform& p, Pa pa) {
  auto ev = p.open("hypervisor", "rmi_granule_undelegate", {{"pa", hex(pa.value)}});
  if (!range_ok(p, pa)) return p.close(ev, Err::OutOfRange);
  if (p.rmm_state.owners.mapped(pa)) return p.close(ev, Err::StillMapped);
  if (p.mem.world_of(pa) != World::Realm) return p.close(ev, Err::WrongWorld);
  return p.close(ev, reclaim(p, pa).error());
}

Status rmi_data_create(Platform& p, VmId vm, Pa src, Pa dst, Ipa ipa, const std::optional<AttachParams>& attach) {
  std::vector<std::pair<std::string, std::string>> args{{"vmid", std::to_string(vm.value)},
                                                        {"src", hex(src.value)},
                                                        {"dst", hex(dst.value)},
                                                        {"ipa", hex(ipa.value)},
                                                        {"attach_dev", attach ? "1" : "0"}};
  if (attach) args.emplace_back("dev", hex(attach->bus.value));
  auto ev = p.open("hypervisor", "rmi_data_create", std::move(args));
  return p.close(ev, data_create(p, vm, src, dst, ipa, attach));
}

Status rmi_realm_activate(Platform& p, VmId vm) {
  auto ev = p.open("hypervisor", "rmi_realm_activate", {{"vmid", std::to_string(vm.value)}});
  RealmVm* r = p.rmm_state.find(vm);
  if (r == nullptr) return p.close(ev, Err::UnknownVm);
  if (r->state == RealmState::Active) return p.close(ev, Err::RealmActive);
  if (r->attach_requested && !r->attached_device) return p.close(ev, Err::AttachIncomplete);
  r->state = RealmState::Active;
  return p.close(ev, Err::None);
}

Status rmi_realm_destroy(Platform& p, VmId vm) {
  auto ev = p.open("hypervisor", "rmi_realm_destroy", {{"vmid", std::to_string(vm.value)}});
  if (p.rmm_state.find(vm) == nullptr) return p.close(ev, Err::UnknownVm);
  (void)monitor::smc_device_detach(p, vm);
  RealmVm* r = p.rmm_state.find(vm);
  for (const auto& [ipa, pa] : r->stage2) {
    if (p.rmm_state.owners.realm(pa) == vm) p.rmm_state.owners.set_realm(pa, std::nullopt);
    if (p.rmm_state.owners.realm(pa)) continue;  // still backing another realm (only without the I4 check)
    (void)reclaim(p, pa);
  }
  p.rmm_state.core_tlb.invalidate_if([vm](const CoreTlbKey& k, const auto&) { return k.vmid == vm; });
  p.rmm_state.realms.erase(vm);
  return p.close(ev, Err::None);
}

Status rsi_delegate_prot_mem(Platform& p, VmId vm, const ScatterGatherList& sg, StreamId device) {
  const RealmVm* r = p.rmm_state.find(vm);
  std::string sg_text;
  for (const auto& e : sg) sg_text += (sg_text.empty() ? "" : ",") + hex(e.ipa.value) + ":" + std::to_string(e.size);
  auto ev = p.open(r ? "realm:" + r->name : "realm", "rsi_delegate_prot_mem",
                   {{"vmid", std::to_string(vm.value)}, {"dev", hex(device.value)}, {"sg", sg_text}});
  if (r == nullptr) return p.close(ev, Err::UnknownVm);
  if (r->state != RealmState::Active) return p.close(ev, Err::NotActive);
  if (r->attached_device != device) return p.close(ev, Err::NotOwner);
  auto ipas = expand(sg);
  if (!ipas) return p.close(ev, ipas.error());

  // Check phase: every granule must resolve through the realm's own stage-2.
  std::vector<std::pair<Ipa, Pa>> todo;
  const Stage2Map* smmu_s2 = p.smmu.stage2(StreamTable::Realm, device);
  for (Ipa ipa : *ipas) {
    auto it = r->stage2.find(ipa);
    if (it == r->stage2.end()) return p.close(ev, Err::Unmapped);
    if (smmu_s2 != nullptr) {
      auto m = smmu_s2->find(ipa);
      if (m != smmu_s2->end() && m->second == it->second) continue;  // already protected
    }
    todo.emplace_back(ipa, it->second);
  }
  // Commit phase: all or nothing.
  const Platform saved = p;
  for (const auto& [ipa, pa] : todo) {
    if (auto st = monitor::smc_delegate_prot_mem(p, vm, device, ipa, pa); !st) {
      p.rollback(saved);
      return p.close(ev, st.error());
    }
  }
  return p.close(ev, Err::None);
}

Result<AttestationReport> attestation_report(Platform& p, VmId vm, std::uint64_t nonce) {
  auto ev = p.open("realm", "attestation_report", {{"vmid", std::to_string(vm.value)}});
  const RealmVm* r = p.rmm_state.find(vm);
  if (r == nullptr) return p.close(ev, Err::UnknownVm);
  if (r->state != RealmState::Active) return p.close(ev, Err::NotActive);
  AttestationReport report;
  report.realm_measurement = r->rim;
  report.data_log = r->log;
  report.bar_layout = r->bars;
  if (r->attached_device && r->device_report) {
    DeviceSection section{*r->device_report, false};
    auto fresh = monitor::challenge_device(p, *r->attached_device, nonce);
    r = p.rmm_state.find(vm);
    section.challenge_ok = fresh.ok() && fresh->identity == section.evidence.identity &&
                           fresh->firmware_digest == section.evidence.firmware_digest &&
                           fresh->config_digest == section.evidence.config_digest;
    report.device_section = section;
  }
  p.close(ev, Err::None);
  return report;
}

Result<Pa> core_translate(Platform& p, VmId vm, Ipa ipa) {
  const RealmVm* r = p.rmm_state.find(vm);
  if (r == nullptr) return Err::UnknownVm;
  Ipa page{granule_base(ipa.value)};
  CoreTlbKey key{vm, page};
  Pa base;
  if (auto hit = p.rmm_state.core_tlb.lookup(key)) {
    base = hit->pa;
  } else {
    auto it = r->stage2.find(page);
    if (it == r->stage2.end()) return Err::Unmapped;
    base = it->second;
    p.rmm_state.core_tlb.insert(key, base, p.mem.generation());
  }
  return Pa{base.value + (ipa.value - page.value)};
}

}  // namespace rmm

}  // namespace acai
