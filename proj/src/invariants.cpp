#include "acai/invariants.hpp"

#include <algorithm>
#include <map>
#include <set>

namespace acai {

bool InvariantReport::ok() const {
  return std::all_of(findings.begin(), findings.end(), [](const Finding& f) { return f.pass; });
}

const Finding* InvariantReport::find(std::string_view property) const {
  for (const auto& f : findings)
    if (f.property == property) return &f;
  return nullptr;
}

const Finding* InvariantReport::first_failure() const {
  for (const auto& f : findings)
    if (!f.pass) return &f;
  return nullptr;
}

std::vector<std::string> InvariantReport::failed() const {
  std::vector<std::string> out;
  for (const auto& f : findings)
    if (!f.pass) out.push_back(f.property);
  return out;
}

bool operator==(const InvariantReport& a, const InvariantReport& b) {
  if (a.findings.size() != b.findings.size()) return false;
  for (std::size_t i = 0; i < a.findings.size(); ++i) {
    if (a.findings[i].property != b.findings[i].property || a.findings[i].pass != b.findings[i].pass) return false;
  }
  return true;
}

const std::vector<std::string>& property_names() {
  static const std::vector<std::string> names{
      "I1",
      "I2",
      "I3",
      "I4",
      "I5",
      "gpc_soundness",
      "encryption_opacity",
      "scrub_on_reclaim",
      "generation_monotonic",
      "tlb_coherence",
      "root_only_mutation",
      "verdict_soundness",
      "link_opacity",
      "registry_ste_coherence",
      "ide_before_read",
      "reverse_map_consistency",
      "smmu_tables_in_root",
  };
  return names;
}

namespace {

std::string hex(std::uint64_t v) { return hex_addr(v); }

class Checker {
 public:
  explicit Checker(const Platform& p) : p_(p) {}

  InvariantReport run() {
    InvariantReport report;
    for (const auto& name : property_names()) {
      witness_.clear();
      evaluate(name);
      report.findings.push_back({name, witness_.empty(), witness_});
    }
    return report;
  }

 private:
  void fail(std::string w) {
    if (witness_.empty()) witness_ = std::move(w);
  }

  void evaluate(const std::string& name) {
    if (name == "I1") identity();
    else if (name == "I2") ownership();
    else if (name == "I3") owner_binding();
    else if (name == "I4") realm_injective();
    else if (name == "I5") device_injective();
    else if (name == "gpc_soundness") gpc_soundness();
    else if (name == "encryption_opacity") opacity();
    else if (name == "scrub_on_reclaim") scrub();
    else if (name == "generation_monotonic") generation();
    else if (name == "tlb_coherence") tlb();
    else if (name == "root_only_mutation") root_only();
    else if (name == "verdict_soundness") verdicts();
    else if (name == "link_opacity") link();
    else if (name == "registry_ste_coherence") ste_coherence();
    else if (name == "ide_before_read") ide_order();
    else if (name == "reverse_map_consistency") reverse_map();
    else if (name == "smmu_tables_in_root") tables_in_root();
  }

  const RegistryEntry* registry(StreamId sid) const { return p_.monitor_state.registry.find(sid); }

  // Every bound device proved its identity with authentic evidence and owns
  // a unique requester id with a root-port key.
  void identity() {
    for (const auto& [sid, e] : p_.monitor_state.registry.entries()) {
      const RealmVm* r = p_.rmm_state.find(e.vmid);
      if (r == nullptr || !r->device_report) {
        fail("sid=" + hex(sid.value) + " bound without evidence");
        continue;
      }
      if (!verify_device_signature(*r->device_report))
        fail("sid=" + hex(sid.value) + " vmid=" + std::to_string(e.vmid.value) + " unauthenticated evidence");
      if (r->device_report->rid != e.rid()) fail("sid=" + hex(sid.value) + " evidence for another rid");
      if (!p_.fabric.root_port_key(e.rid())) fail("sid=" + hex(sid.value) + " no IDE key");
    }
  }

  void ownership() {
    std::map<VmId, StreamId> by_vm;
    for (const auto& [sid, e] : p_.monitor_state.registry.entries()) {
      if (auto [it, fresh] = by_vm.emplace(e.vmid, sid); !fresh)
        fail("vmid=" + std::to_string(e.vmid.value) + " sid=" + hex(it->second.value) + " sid=" + hex(sid.value));
      const RealmVm* r = p_.rmm_state.find(e.vmid);
      if (r == nullptr || r->attached_device != sid) {
        fail("sid=" + hex(sid.value) + " registry owner vmid=" + std::to_string(e.vmid.value) + " disagrees");
        continue;
      }
      if (p_.mem.world_of(e.config_pa) != World::Realm)
        fail("config pa=" + hex(e.config_pa.value) + " in " + std::string(to_string(p_.mem.world_of(e.config_pa))));
      only_owner(*r, e.config_pa, "config");
      for (const auto& bar : r->bars) {
        for (std::uint64_t off = 0; off < bar.size; off += kGranuleSize) {
          auto it = r->stage2.find(Ipa{bar.ipa.value + off});
          if (it == r->stage2.end()) {
            fail("bar ipa=" + hex(bar.ipa.value + off) + " unmapped in owner vmid=" + std::to_string(r->vmid.value));
            continue;
          }
          if (p_.mem.world_of(it->second) != World::Realm) fail("bar pa=" + hex(it->second.value) + " not realm");
          only_owner(*r, it->second, "bar");
        }
      }
    }
    for (const auto& [vm, r] : p_.rmm_state.realms) {
      if (!r.attached_device) continue;
      const RegistryEntry* e = registry(*r.attached_device);
      if (e == nullptr || e->vmid != vm)
        fail("vmid=" + std::to_string(vm.value) + " claims sid=" + hex(r.attached_device->value));
    }
  }

  void only_owner(const RealmVm& owner, Pa pa, const char* what) {
    bool in_owner = std::any_of(owner.stage2.begin(), owner.stage2.end(), [&](const auto& m) { return m.second == pa; });
    if (!in_owner) fail(std::string(what) + " pa=" + hex(pa.value) + " not in owner stage-2");
    for (const auto& [vm, r] : p_.rmm_state.realms) {
      if (vm == owner.vmid) continue;
      for (const auto& [ipa, mapped] : r.stage2)
        if (mapped == pa) fail(std::string(what) + " pa=" + hex(pa.value) + " also mapped by vmid=" + std::to_string(vm.value));
    }
  }

  void owner_binding() {
    for (const auto& [sid, table] : p_.smmu.stage2_tables(StreamTable::Realm)) {
      const RegistryEntry* e = registry(sid);
      const RealmVm* r = e ? p_.rmm_state.find(e->vmid) : nullptr;
      for (const auto& [ipa, pa] : table) {
        if (r == nullptr) {
          fail("sid=" + hex(sid.value) + " ipa=" + hex(ipa.value) + " has no owner realm");
          continue;
        }
        auto it = r->stage2.find(ipa);
        if (it == r->stage2.end() || it->second != pa)
          fail("sid=" + hex(sid.value) + " ipa=" + hex(ipa.value) + " smmu pa=" + hex(pa.value) + " realm pa=" +
               (it == r->stage2.end() ? std::string("none") : hex(it->second.value)));
      }
    }
    for (const auto& [sid, e] : p_.monitor_state.registry.entries()) {
      const Stage2Map* normal = p_.smmu.stage2(StreamTable::Normal, sid);
      if (normal != nullptr && !normal->empty()) fail("sid=" + hex(sid.value) + " keeps normal-world translations");
    }
  }

  void realm_injective() {
    std::map<Pa, std::string> seen;
    for (const auto& [vm, r] : p_.rmm_state.realms) {
      for (const auto& [ipa, pa] : r.stage2) {
        std::string who = "vmid=" + std::to_string(vm.value) + "/ipa=" + hex(ipa.value);
        if (auto [it, fresh] = seen.emplace(pa, who); !fresh)
          fail("pa=" + hex(pa.value) + " " + it->second + " " + who);
      }
    }
  }

  void device_injective() {
    std::map<Pa, std::string> seen;
    for (StreamTable t : {StreamTable::Realm, StreamTable::Normal}) {
      for (const auto& [sid, table] : p_.smmu.stage2_tables(t)) {
        for (const auto& [ipa, pa] : table) {
          std::string who = "sid=" + hex(sid.value);
          if (auto [it, fresh] = seen.emplace(pa, who); !fresh)
            fail("pa=" + hex(pa.value) + " " + it->second + " " + who);
        }
      }
    }
  }

  void gpc_soundness() {
    for (const auto& a : p_.mem.accesses())
      if (a.allowed && gpc_matrix(a.accessor_world, a.target_world) != Access::Allow)
        fail(std::string(to_string(a.accessor_world)) + " accessed " + std::string(to_string(a.target_world)) +
             " pa=" + hex(a.pa.value));
  }

  void opacity() {
    for (const auto& a : p_.mem.accesses())
      if (a.plaintext_leaked) fail("plaintext returned under wrong key at pa=" + hex(a.pa.value));
  }

  void scrub() {
    for (const auto& c : p_.mem.world_changes())
      if (c.from == World::Realm && c.to == World::Normal && !c.contents_zero)
        fail("pa=" + hex(c.pa.value) + " left realm with data");
  }

  void generation() {
    std::uint64_t last = 0;
    for (const auto& c : p_.mem.world_changes()) {
      if (c.generation <= last) fail("generation " + std::to_string(c.generation) + " after " + std::to_string(last));
      last = c.generation;
    }
    if (last > p_.mem.generation()) fail("generation went backwards");
  }

  void tlb() {
    for (const auto& t : p_.smmu.translations())
      if (!t.fresh || *t.fresh != t.used)
        fail("sid=" + hex(t.sid.value) + " ipa=" + hex(t.ipa.value) + " used pa=" + hex(t.used.value));
    for (const auto& [k, e] : p_.smmu.tlb().entries()) {
      const Stage2Map* s2 = p_.smmu.stage2(k.table, k.sid);
      auto it = s2 ? s2->find(k.ipa) : Stage2Map::const_iterator{};
      if (s2 == nullptr || it == s2->end() || it->second != e.pa)
        fail("stale smmu tlb sid=" + hex(k.sid.value) + " ipa=" + hex(k.ipa.value));
    }
    for (const auto& [k, e] : p_.rmm_state.core_tlb.entries()) {
      const RealmVm* r = p_.rmm_state.find(k.vmid);
      auto it = r ? r->stage2.find(k.ipa) : std::map<Ipa, Pa>::const_iterator{};
      if (r == nullptr || it == r->stage2.end() || it->second != e.pa)
        fail("stale core tlb vmid=" + std::to_string(k.vmid.value) + " ipa=" + hex(k.ipa.value));
    }
  }

  void root_only() {
    for (const auto& w : p_.smmu.table_writes())
      if (w.committed && w.caller != World::Root) fail("smmu table written from " + std::string(to_string(w.caller)));
    for (const auto& w : p_.fabric.key_writes())
      if (w.committed && w.caller != World::Root) fail("IDE key store written from " + std::string(to_string(w.caller)));
  }

  void verdicts() {
    for (const auto& v : p_.fabric.verdicts())
      if (v.verdict == RootPortVerdict::DecryptedOk && (!v.envelope_key || v.envelope_key != v.store_key))
        fail("rid=" + hex(v.rid.value) + " decrypted without matching key");
  }

  void link() {
    for (const auto& t : p_.fabric.taps())
      if (t.t_bit && t.plaintext_exposed) fail("rid=" + hex(t.rid.value) + " realm payload visible on the link");
  }

  void ste_coherence() {
    for (const auto& [sid, ste] : p_.smmu.entries(StreamTable::Realm))
      if (ste.valid && !p_.monitor_state.registry.contains(sid)) fail("valid realm STE sid=" + hex(sid.value) + " unregistered");
    for (const auto& [sid, e] : p_.monitor_state.registry.entries()) {
      const StreamTableEntry* ste = p_.smmu.ste(StreamTable::Realm, sid);
      if (ste == nullptr || !ste->valid || ste->world != World::Realm || ste->ats_enabled || ste->owner != e.vmid)
        fail("registered sid=" + hex(sid.value) + " lacks a realm STE");
    }
  }

  void ide_order() {
    bool attaching = false;
    bool keyed = false;
    for (const auto& ev : p_.journal) {
      if (ev.actor != "monitor") continue;
      if (ev.op == "lock") {
        attaching = true;
        keyed = false;
      } else if (ev.op == "unlock") {
        attaching = false;
      } else if (ev.op == "ide_program_key" && ev.result == Err::None) {
        keyed = true;
      } else if (attaching && !keyed && (ev.op == "spdm_attest" || ev.op == "config_read")) {
        fail(ev.op + " before IDE key programming");
      }
    }
  }

  void reverse_map() {
    const auto& owners = p_.rmm_state.owners;
    std::map<Pa, std::set<VmId>> realm;
    std::map<Pa, std::set<StreamId>> device;
    for (const auto& [vm, r] : p_.rmm_state.realms)
      for (const auto& [ipa, pa] : r.stage2) realm[pa].insert(vm);
    for (StreamTable t : {StreamTable::Realm, StreamTable::Normal})
      for (const auto& [sid, table] : p_.smmu.stage2_tables(t))
        for (const auto& [ipa, pa] : table) device[pa].insert(sid);
    for (std::size_t i = 0; i < owners.size(); ++i) {
      Pa pa{i * kGranuleSize};
      auto r = owners.realm(pa);
      auto d = owners.device(pa);
      bool realm_ok = r ? realm[pa].contains(*r) : realm[pa].empty();
      bool device_ok = d ? device[pa].contains(*d) : device[pa].empty();
      if (!realm_ok || !device_ok) fail("reverse map disagrees at pa=" + hex(pa.value));
    }
  }

  void tables_in_root() {
    const auto& layout = p_.smmu.layout();
    bool realm_streams = !p_.smmu.entries(StreamTable::Realm).empty();
    if (!realm_streams) return;
    if (!layout) {
      fail("realm streams without root-held SMMU tables");
      return;
    }
    for (Pa pa : {layout->stream_table, layout->stage2_pool, layout->queues})
      if (p_.mem.world_of(pa) != World::Root) fail("SMMU structure pa=" + hex(pa.value) + " not root");
  }

  const Platform& p_;
  std::string witness_;
};

}  // namespace

InvariantReport check_invariants(const Platform& p) { return Checker(p).run(); }

}  // namespace acai
