#include "acai/monitor.hpp"

#include "acai/platform.hpp"

namespace acai {

std::array<std::uint8_t, 8> RegistryEntry::pack() const {
  std::uint64_t word = (sid.value & 0xffff) | (vmid.value & 0xffff) << 16 |
                       ((config_pa.value / kGranuleSize) & 0xffffff) << 32 |
                       static_cast<std::uint64_t>(bar_count) << 56;
  std::array<std::uint8_t, 8> out{};
  for (int i = 0; i < 8; ++i) out[i] = static_cast<std::uint8_t>(word >> (8 * i));
  return out;
}

RegistryEntry RegistryEntry::unpack(const std::array<std::uint8_t, 8>& bytes) {
  std::uint64_t word = 0;
  for (int i = 0; i < 8; ++i) word |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
  RegistryEntry e;
  e.sid = StreamId{word & 0xffff};
  e.vmid = VmId{(word >> 16) & 0xffff};
  e.config_pa = Pa{((word >> 32) & 0xffffff) * kGranuleSize};
  e.bar_count = static_cast<std::uint8_t>(word >> 56);
  return e;
}

const RegistryEntry* RealmDeviceRegistry::find(StreamId sid) const {
  auto it = entries_.find(sid);
  return it == entries_.end() ? nullptr : &it->second;
}

const RegistryEntry* RealmDeviceRegistry::find_vm(VmId vm) const {
  for (const auto& [sid, e] : entries_)
    if (e.vmid == vm) return &e;
  return nullptr;
}

const std::set<std::string>& smmu_allow_list() {
  static const std::set<std::string> fields{"event_queue_threshold", "fault_record_config", "normal_stream_s2_base"};
  return fields;
}

const std::set<std::string>& smmu_denied_fields() {
  static const std::set<std::string> fields{"smmu_enable", "stage2_bypass", "ats_enable", "realm_stream_table_base",
                                            "gpt_base"};
  return fields;
}

void MonitorState::encode(ByteWriter& w) const {
  w.u32(static_cast<std::uint32_t>(registry.entries().size()));
  for (const auto& [sid, e] : registry.entries()) w.bytes(e.pack());
  w.boolean(stream_table_locked);
  w.boolean(booted);
  w.u64(next_ide_key);
}

namespace monitor {

namespace {

struct FlushAll final : FlushSink {
  explicit FlushAll(Platform& p) : p(p) {}
  void on_gpt_change(Pa pa, std::uint64_t generation) override {
    p.smmu.on_gpt_change(pa, generation);
    p.rmm_state.core_tlb.invalidate_pa(pa);
  }
  Platform& p;
};

const AccessorCtx kMonitor = AccessorCtx::monitor();

std::string hex(std::uint64_t v) { return hex_addr(v); }

}  // namespace

void boot_init(Platform& p) {
  if (p.monitor_state.booted) return;
  auto ev = p.open("monitor", "boot_init");
  auto n = p.mem.granule_count();
  SmmuLayout layout{Pa{(n - 3) * kGranuleSize}, Pa{(n - 2) * kGranuleSize}, Pa{(n - 1) * kGranuleSize}};
  for (Pa pa : {layout.stream_table, layout.stage2_pool, layout.queues}) (void)set_world(p, pa, World::Root);
  p.smmu.set_layout(layout);
  auto& c = p.smmu.config();
  c.enabled = true;
  c.stage2_enforced = true;
  c.stage2_bypass = false;
  c.ats_enabled = false;
  p.monitor_state.booted = true;
  p.close(ev, Err::None);
}

Status set_world(Platform& p, Pa pa, World world) {
  FlushAll sink(p);
  return p.mem.set_world(pa, world, kMonitor, sink);
}

Result<DeviceReport> smc_device_attach(Platform& p, VmId vm, BusAddr bus, Pa config_pa, std::uint8_t bar_count) {
  auto ev = p.open("monitor", "smc_device_attach",
                   {{"vmid", std::to_string(vm.value)}, {"bus", hex(bus.value)}, {"config_pa", hex(config_pa.value)}});
  const Platform saved = p;
  const Checks& checks = p.cfg.checks;
  auto fail = [&](Err e) -> Err {
    p.rollback(saved);
    p.log("monitor", "unlock");
    return p.close(ev, e);
  };

  p.monitor_state.stream_table_locked = true;
  p.log("monitor", "lock");

  p.log("monitor", "bus_probe", {{"bus", hex(bus.value)}});
  if (p.fabric.device(bus) == nullptr) return fail(Err::DeviceNotFound);
  StreamId sid = stream_of(bus);
  Rid rid = rid_of(bus);
  if (checks.attach_ownership) {
    if (p.monitor_state.registry.contains(sid)) return fail(Err::StreamIdTaken);
    if (p.monitor_state.registry.find_vm(vm) != nullptr) return fail(Err::VmAlreadyHasDevice);
  }

  (void)p.fabric.device_reset(bus);
  p.log("device", "device_reset", {{"bus", hex(bus.value)}});

  if (!checks.attach_ownership && p.fabric.root_port_key(rid)) (void)p.fabric.ide_erase_key(rid, kMonitor);
  KeyId key{p.monitor_state.next_ide_key++};
  Status programmed = p.fabric.ide_program_key(rid, key, kMonitor);
  p.log("monitor", "ide_program_key", {{"rid", hex(rid.value)}, {"key", std::to_string(key.value)}},
        programmed.error());
  if (!programmed) return fail(programmed.error());

  // Evidence is only requested over the freshly keyed link.
  std::uint64_t nonce = 0x5eed0000 + key.value;
  Result<DeviceReport> report = p.fabric.link_secure(rid) ? p.fabric.spdm_attest(bus, nonce, checks.attestation)
                                                          : Result<DeviceReport>(Err::AttestFailed);
  p.log("monitor", "spdm_attest", {{"bus", hex(bus.value)}, {"nonce", std::to_string(nonce)}}, report.error());
  if (!report) return fail(report.error());

  const RealmVm* realm = p.rmm_state.find(vm);
  Bytes config = p.fabric.device(bus)->config_space.read(0, kGranuleSize);
  p.log("monitor", "config_read", {{"bus", hex(bus.value)}});
  AccessorCtx writer = kMonitor;
  writer.vmid = vm;
  if (realm != nullptr) writer.mec_key = realm->mec_key;
  Status written = p.mem.write(writer, config_pa, config);
  p.log("monitor", "config_write", {{"pa", hex(config_pa.value)}}, written.error());
  if (!written) return fail(written.error());

  // The stream leaves hypervisor control: drop whatever normal-world
  // translations it had before installing the realm entry.
  if (const Stage2Map* old = p.smmu.stage2(StreamTable::Normal, sid)) {
    for (const auto& [ipa, pa] : *old)
      if (p.rmm_state.owners.device(pa) == sid) p.rmm_state.owners.set_device(pa, std::nullopt);
  }
  (void)p.smmu.s2_clear(StreamTable::Normal, sid, kMonitor);
  (void)p.smmu.ste_invalidate(StreamTable::Normal, sid, kMonitor);

  StreamTableEntry ste{sid, true, World::Realm, sid.value, false, vm, writer.mec_key};
  Status st = p.smmu.ste_write(StreamTable::Realm, ste, kMonitor);
  p.log("monitor", "ste_write", {{"sid", hex(sid.value)}, {"world", "Realm"}}, st.error());
  if (!st) return fail(st.error());

  RegistryEntry entry{sid, vm, config_pa, bar_count};
  p.monitor_state.registry.insert(entry);
  p.log("monitor", "registry_record", {{"sid", hex(sid.value)}, {"entry", to_hex(entry.pack())}});

  p.monitor_state.stream_table_locked = false;
  p.log("monitor", "unlock");
  p.close(ev, Err::None);
  return report;
}

Status smc_device_detach(Platform& p, VmId vm) {
  auto ev = p.open("monitor", "smc_device_attach", {{"vmid", std::to_string(vm.value)}, {"mode", "detach"}});
  const RegistryEntry* found = p.monitor_state.registry.find_vm(vm);
  if (found == nullptr) return p.close(ev, Err::None);
  RegistryEntry entry = *found;
  if (const Stage2Map* s2 = p.smmu.stage2(StreamTable::Realm, entry.sid)) {
    for (const auto& [ipa, pa] : *s2)
      if (p.rmm_state.owners.device(pa) == entry.sid) p.rmm_state.owners.set_device(pa, std::nullopt);
  }
  (void)p.smmu.ste_invalidate(StreamTable::Realm, entry.sid, kMonitor);
  (void)p.smmu.s2_clear(StreamTable::Realm, entry.sid, kMonitor);
  (void)p.fabric.ide_erase_key(entry.rid(), kMonitor);
  p.monitor_state.registry.erase(entry.sid);
  p.log("monitor", "registry_erase", {{"sid", hex(entry.sid.value)}});
  return p.close(ev, Err::None);
}

Status smc_delegate_prot_mem(Platform& p, VmId vm, StreamId sid, Ipa ipa, Pa pa) {
  auto ev = p.open("monitor", "smc_delegate_prot_mem",
                   {{"vmid", std::to_string(vm.value)},
                    {"sid", hex(sid.value)},
                    {"ipa", hex(ipa.value)},
                    {"pa", hex(pa.value)}});
  const RegistryEntry* entry = p.monitor_state.registry.find(sid);
  if (entry == nullptr || entry->vmid != vm) return p.close(ev, Err::NotOwner);
  if (!p.mem.in_range(pa)) return p.close(ev, Err::OutOfRange);
  if (p.mem.world_of(pa) != World::Realm) return p.close(ev, Err::WrongWorld);
  if (p.cfg.checks.realm_stream) {
    // The pair must be exactly what the owner realm's own stage-2 says.
    const RealmVm* realm = p.rmm_state.find(vm);
    bool mirrored = false;
    if (realm != nullptr) {
      auto it = realm->stage2.find(ipa);
      mirrored = it != realm->stage2.end() && it->second == pa;
    }
    if (!mirrored) return p.close(ev, Err::NotOwner);
  }
  if (const Stage2Map* s2 = p.smmu.stage2(StreamTable::Realm, sid); s2 && s2->contains(ipa))
    return p.close(ev, Err::IpaInUse);
  if (p.cfg.checks.pa_overlap && p.rmm_state.owners.device(pa)) return p.close(ev, Err::PaOwnedByOtherDevice);
  Status st = p.smmu.s2_write(StreamTable::Realm, sid, ipa, pa, kMonitor);
  if (st) p.rmm_state.owners.set_device(pa, sid);
  return p.close(ev, st.error());
}

namespace {

Err hyp_map(Platform& p, const SmmuMapRequest& r) {
  bool realm_stream = p.monitor_state.registry.contains(r.sid);
  if (realm_stream && p.cfg.checks.realm_stream) return Err::RealmStreamDenied;
  if (!p.mem.in_range(r.pa) || !granule_aligned(r.pa.value) || !granule_aligned(r.ipa.value))
    return Err::OutOfRange;
  StreamTable table = realm_stream ? StreamTable::Realm : StreamTable::Normal;
  const Stage2Map* s2 = p.smmu.stage2(table, r.sid);
  std::optional<Pa> old;
  if (s2 != nullptr) {
    if (auto it = s2->find(r.ipa); it != s2->end()) old = it->second;
  }
  if (old == r.pa) return Err::None;
  if (p.cfg.checks.pa_overlap && p.rmm_state.owners.device(r.pa)) return Err::PaOwnedByOtherDevice;
  if (table == StreamTable::Normal && p.smmu.ste(table, r.sid) == nullptr) {
    StreamTableEntry ste{r.sid, true, World::Normal, r.sid.value, false, std::nullopt, std::nullopt};
    if (auto st = p.smmu.ste_write(table, ste, kMonitor); !st) return st.error();
  }
  if (auto st = p.smmu.s2_write(table, r.sid, r.ipa, r.pa, kMonitor); !st) return st.error();
  if (old && p.rmm_state.owners.device(*old) == r.sid) p.rmm_state.owners.set_device(*old, std::nullopt);
  p.rmm_state.owners.set_device(r.pa, r.sid);
  return Err::None;
}

Err hyp_unmap(Platform& p, const SmmuUnmapRequest& r) {
  bool realm_stream = p.monitor_state.registry.contains(r.sid);
  if (realm_stream && p.cfg.checks.realm_stream) return Err::RealmStreamDenied;
  StreamTable table = realm_stream ? StreamTable::Realm : StreamTable::Normal;
  const Stage2Map* s2 = p.smmu.stage2(table, r.sid);
  if (s2 == nullptr || !s2->contains(r.ipa)) return Err::None;
  Pa pa = s2->at(r.ipa);
  if (auto st = p.smmu.s2_remove(table, r.sid, r.ipa, kMonitor); !st) return st.error();
  if (p.rmm_state.owners.device(pa) == r.sid) p.rmm_state.owners.set_device(pa, std::nullopt);
  return Err::None;
}

Err hyp_config(Platform& p, const SmmuConfigRequest& r) {
  if (!smmu_allow_list().contains(r.field)) return Err::FieldDenied;
  p.smmu.config().fields[r.field] = r.value;
  return Err::None;
}

}  // namespace

Status smc_smmu_request(Platform& p, const SmmuHypRequest& req) {
  std::vector<std::pair<std::string, std::string>> args;
  Err e = Err::None;
  if (const auto* m = std::get_if<SmmuMapRequest>(&req)) {
    args = {{"type", "map"}, {"sid", hex(m->sid.value)}, {"ipa", hex(m->ipa.value)}, {"pa", hex(m->pa.value)}};
  } else if (const auto* u = std::get_if<SmmuUnmapRequest>(&req)) {
    args = {{"type", "unmap"}, {"sid", hex(u->sid.value)}, {"ipa", hex(u->ipa.value)}};
  } else if (const auto* c = std::get_if<SmmuConfigRequest>(&req)) {
    args = {{"type", "config"}, {"field", c->field}, {"value", std::to_string(c->value)}};
  } else {
    args = {{"type", "ats"}, {"sid", hex(std::get<SmmuAtsRequest>(req).sid.value)}};
  }
  auto ev = p.open("hypervisor", "smc_smmu_request", std::move(args));
  if (const auto* m = std::get_if<SmmuMapRequest>(&req)) {
    e = hyp_map(p, *m);
  } else if (const auto* u = std::get_if<SmmuUnmapRequest>(&req)) {
    e = hyp_unmap(p, *u);
  } else if (const auto* c = std::get_if<SmmuConfigRequest>(&req)) {
    e = hyp_config(p, *c);
  } else {
    e = Err::AtsDenied;  // address translation services would bypass stage-2 checks entirely
  }
  return p.close(ev, e);
}

Result<DeviceReport> challenge_device(Platform& p, StreamId sid, std::uint64_t nonce) {
  Rid rid = rid_of(bus_of(sid));
  auto ev = p.open("monitor", "spdm_attest", {{"bus", hex(sid.value)}, {"nonce", std::to_string(nonce)}});
  if (!p.fabric.link_secure(rid)) return p.close(ev, Err::AttestFailed);
  auto report = p.fabric.spdm_attest(bus_of(sid), nonce, true);
  p.close(ev, report.error());
  return report;
}

}  // namespace monitor

}  // namespace acai
