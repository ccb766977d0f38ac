#include "acai/adversary.hpp"

#include <stdexcept>

namespace acai {

std::string_view to_string(Actor a) {
  switch (a) {
    case Actor::Hypervisor: return "hypervisor";
    case Actor::CoTenantRealm: return "cotenant_realm";
    case Actor::MaliciousDevice: return "malicious_device";
    case Actor::Physical: return "physical";
    case Actor::SecureWorld: return "secure_world";
    case Actor::Honest: return "honest";
  }
  return "?";
}

namespace {

Command make(const std::string& line) {
  auto cmd = tokenize(line, 0);
  if (!cmd) throw std::logic_error("empty command");
  if (auto problem = validate(*cmd)) throw std::logic_error(line + ": " + *problem);
  return *cmd;
}

std::string hex(std::uint64_t v) { return hex_addr(v); }

std::string realm_name(std::size_t i) { return "r" + std::to_string(i); }

// Granule 0 holds the hypervisor's staging data; the monitor reserves the top.
std::vector<std::uint64_t> allocatable(const ExploreConfig& cfg) {
  std::vector<std::uint64_t> out;
  for (std::size_t g = 1; g + kReservedGranules < cfg.granules; ++g) out.push_back(g * kGranuleSize);
  return out;
}

std::vector<std::uint64_t> explore_ipas(const ExploreConfig& cfg) {
  std::vector<std::uint64_t> out;
  for (std::size_t i = 0; i < cfg.ipas; ++i) out.push_back(0x10000 + i * kGranuleSize);
  return out;
}

// Odd-numbered devices expose one single-granule BAR at the last IPA.
bool has_bar(std::size_t dev) { return dev % 2 == 1; }

}  // namespace

BusAddr explore_device(std::size_t i) { return BusAddr{0x100 + 8 * i}; }

PlatformConfig explore_platform(const ExploreConfig& cfg, const Checks& checks) {
  PlatformConfig pc;
  pc.granules = cfg.granules;
  pc.max_realms = cfg.realms;
  pc.checks = checks;
  return pc;
}

std::vector<Command> explore_setup(const ExploreConfig& cfg) {
  std::vector<Command> out;
  for (std::size_t d = 0; d < cfg.devices; ++d)
    out.push_back(make("plug " + hex(explore_device(d).value) + (has_bar(d) ? " bars=1" : "")));
  out.push_back(make("mem hv write pa=0x0 data=5a5a5a5a"));
  return out;
}

std::vector<AdversaryAction> action_alphabet(const ExploreConfig& cfg) {
  std::vector<AdversaryAction> out;
  if (cfg.realms == 0 && cfg.devices == 0 && cfg.ipas == 0) return out;
  auto add = [&](Actor a, const std::string& line) { out.push_back({a, make(line)}); };
  const auto pas = allocatable(cfg);
  const auto ipas = explore_ipas(cfg);
  std::vector<std::uint64_t> all_pas;
  for (std::size_t g = 0; g < cfg.granules; ++g) all_pas.push_back(g * kGranuleSize);
  std::vector<std::uint64_t> normal_pas{0};
  normal_pas.insert(normal_pas.end(), pas.begin(), pas.end());

  // Honest host and realm lifecycle.
  for (auto pa : pas) add(Actor::Honest, "delegate " + hex(pa));
  for (std::size_t r = 0; r < cfg.realms; ++r) {
    const std::string name = realm_name(r);
    add(Actor::Honest, "realm_create " + name);
    for (auto pa : pas)
      for (auto ipa : ipas)
        add(Actor::Honest, "data_create " + name + " src=0x0 dst=" + hex(pa) + " ipa=" + hex(ipa));
    for (auto pa : pas)
      for (auto ipa : ipas)
        for (std::size_t d = 0; d < cfg.devices; ++d) {
          std::string line = "data_create " + name + " src=0x0 dst=" + hex(pa) + " ipa=" + hex(ipa) +
                             " attach_dev dev=" + hex(explore_device(d).value);
          if (has_bar(d) && !ipas.empty()) line += " bars=" + hex(ipas.back()) + ":4096";
          add(Actor::Honest, line);
        }
    add(Actor::Honest, "activate " + name);
    add(Actor::Honest, "destroy " + name);
    for (std::size_t d = 0; d < cfg.devices; ++d)
      for (auto ipa : ipas)
        add(Actor::Honest,
            "prot_mem " + name + " dev=" + hex(explore_device(d).value) + " sg=" + hex(ipa) + ":4096");
    for (auto ipa : ipas) add(Actor::Honest, "mem " + name + " write ipa=" + hex(ipa) + " data=c3");
    if (!ipas.empty()) add(Actor::Honest, "mmio " + name + " write ipa=" + hex(ipas.back()) + " data=e1");
  }

  // Devices: honest DMA in both worlds, and a malicious one forging its requester id.
  for (std::size_t d = 0; d < cfg.devices; ++d) {
    const std::string bus = hex(explore_device(d).value);
    for (const char* op : {"read", "write"})
      for (const char* t : {"0", "1"})
        for (auto ipa : ipas)
          add(Actor::Honest, "dma " + bus + " " + op + " ipa=" + hex(ipa) + " len=4 t=" + t);
    if (cfg.devices > 1 && !ipas.empty())
      add(Actor::MaliciousDevice, "dma " + bus + " write ipa=" + hex(ipas.front()) + " len=4 t=1 rid=" +
                                      hex(explore_device((d + 1) % cfg.devices).value));
  }

  // Hypervisor.
  for (auto pa : pas) add(Actor::Hypervisor, "undelegate " + hex(pa));
  for (std::size_t d = 0; d < cfg.devices; ++d) {
    const std::string sid = hex(explore_device(d).value);
    for (auto ipa : ipas) {
      for (auto pa : normal_pas) add(Actor::Hypervisor, "smmu map sid=" + sid + " ipa=" + hex(ipa) + " pa=" + hex(pa));
      add(Actor::Hypervisor, "smmu unmap sid=" + sid + " ipa=" + hex(ipa));
    }
    add(Actor::Hypervisor, "smmu ats sid=" + sid);
  }
  add(Actor::Hypervisor, "smmu config field=event_queue_threshold value=1");
  add(Actor::Hypervisor, "smmu config field=stage2_bypass value=1");
  for (auto pa : all_pas) {
    add(Actor::Hypervisor, "mem hv read pa=" + hex(pa) + " len=4");
    add(Actor::Hypervisor, "mem hv write pa=" + hex(pa) + " data=ee");
  }
  for (std::size_t d = 0; d < cfg.devices; ++d) {
    const std::string bus = hex(explore_device(d).value);
    add(Actor::Hypervisor, "emulate " + bus + (has_bar(d) ? " bars=1" : ""));
    add(Actor::Hypervisor, "ide_key rid=" + bus);
  }

  // Secure world and physical attacker.
  for (auto pa : all_pas) add(Actor::SecureWorld, "mem secure read pa=" + hex(pa) + " len=4");
  for (std::size_t d = 0; d < cfg.devices; ++d)
    add(Actor::Physical, "plug " + hex(explore_device(d).value) + (has_bar(d) ? " bars=1" : "") + " serial=99");
  add(Actor::Physical, "replay");
  return out;
}

namespace {

// Shared victim: a realm with a two-BAR device attached, active, and one
// protected DMA buffer at IPA 0x10000 backed by PA 0x2000.
std::vector<std::string> victim(const std::string& plug = "plug 0x100 bars=2,1 serial=1",
                                const std::string& bars = "0x40000:8192,0x42000:4096", bool attach = true) {
  std::vector<std::string> s{
      plug,
      "mem hv write pa=0x0 data=c0ffee",
      "delegate 0x1000",
      "delegate 0x2000",
      "delegate 0x3000",
      "delegate 0x4000",
      "delegate 0x5000",
      "delegate 0x6000",
      "delegate 0x7000",
      "realm_create victim",
      "data_create victim src=0x0 dst=0x2000 ipa=0x10000",
      "data_create victim src=0x0 dst=0x3000 ipa=0x40000",
      "data_create victim src=0x0 dst=0x4000 ipa=0x41000",
      "data_create victim src=0x0 dst=0x5000 ipa=0x42000",
      "policy honest device=required firmware=fw-1.0 bars=2,1",
  };
  if (!attach) return s;
  s.push_back("data_create victim src=0x0 dst=0x1000 ipa=0x30000 attach_dev dev=0x100 bars=" + bars);
  s.push_back("activate victim");
  s.push_back("prot_mem victim dev=0x100 sg=0x10000:4096");
  return s;
}

std::vector<std::string> with(std::vector<std::string> base, std::initializer_list<std::string> more) {
  base.insert(base.end(), more.begin(), more.end());
  return base;
}

std::vector<AttackScenario> build_scenarios() {
  using A = Actor;
  const std::string attach = "data_create victim src=0x0 dst=0x1000 ipa=0x30000 attach_dev dev=0x100 bars=";
  return {
      {"hv_remap_realm_stream", A::Hypervisor, "redirect the realm device's DMA to hypervisor memory", victim(),
       {"smmu map sid=0x100 ipa=0x10000 pa=0x0"}, Err::RealmStreamDenied, 0},
      {"hv_smmu_config_tamper", A::Hypervisor, "switch off stage-2 translation for every stream", victim(),
       {"smmu config field=stage2_bypass value=1"}, Err::FieldDenied, 0},
      {"hv_enable_ats", A::Hypervisor, "let the device cache translations the monitor cannot revoke", victim(),
       {"smmu ats sid=0x100"}, Err::AtsDenied, 0},
      {"hv_emulate_device", A::Hypervisor, "attach a software-emulated device to the realm",
       victim("emulate 0x100 bars=2,1", "", false), {attach + "0x40000:8192,0x42000:4096"}, Err::AttestFailed, 0},
      {"hv_wrong_bar_sizes", A::Hypervisor, "declare BAR sizes that differ from the device's",
       victim("plug 0x100 bars=2,1 serial=1", "", false),
       {attach + "0x40000:4096,0x42000:4096", "activate victim", "attest victim", "verify victim policy=honest"},
       Err::BarMismatch, 3},
      {"hv_bar_in_normal_world", A::Hypervisor, "leave a BAR in hypervisor-controlled memory",
       victim("plug 0x100 bars=2,1 serial=1", "", false), {attach + "0x40000:8192,0x50000:4096"}, Err::BarNotMapped,
       0},
      {"hv_reclaim_during_dma", A::Hypervisor, "reclaim a granule the device is still mapping", victim(),
       {"undelegate 0x2000"}, Err::StillMapped, 0},
      {"hv_double_assign_device", A::Hypervisor, "attach the victim's device to a second realm", victim(),
       {"realm_create intruder",
        "data_create intruder src=0x0 dst=0x6000 ipa=0x30000 attach_dev dev=0x100"},
       Err::StreamIdTaken, 1},
      {"hv_tamper_config_space", A::Hypervisor, "rewrite the device configuration after attach", victim(),
       {"mem hv write pa=0x1000 data=ff"}, Err::GpcDenied, 0},
      {"hv_program_ide_key", A::Hypervisor, "install a link key it knows in the root port", victim(),
       {"ide_key rid=0x100"}, Err::NotRoot, 0},
      {"hv_direct_smmu_write", A::Hypervisor, "write the SMMU stream table directly", victim(),
       {"mem hv write pa=0xfd000 data=00"}, Err::GpcDenied, 0},
      {"hv_debug_device", A::Hypervisor, "pass off a device in debug mode",
       victim("plug 0x100 bars=2,1 serial=1 debug"), {"attest victim", "verify victim policy=honest"},
       Err::DebugEnabled, 1},
      {"cotenant_overlap_dma", A::CoTenantRealm, "map the victim's DMA buffer into its own address space",
       with(victim(), {"realm_create attacker"}), {"data_create attacker src=0x0 dst=0x2000 ipa=0x10000"},
       Err::DoubleMap, 0},
      {"cotenant_ipa_claim", A::CoTenantRealm, "point its device at memory it does not own",
       with(victim(), {"plug 0x108 serial=2", "realm_create attacker",
                       "data_create attacker src=0x0 dst=0x6000 ipa=0x10000",
                       "data_create attacker src=0x0 dst=0x7000 ipa=0x30000 attach_dev dev=0x108",
                       "activate attacker"}),
       {"prot_mem attacker dev=0x108 sg=0x20000:4096"}, Err::Unmapped, 0},
      {"device_forge_rid", A::MaliciousDevice, "inject DMA under the victim device's requester id",
       with(victim(), {"plug 0x200 serial=3"}), {"dma 0x200 write ipa=0x10000 len=4 t=1 rid=0x100"},
       Err::DiscardedAtRootPort, 0},
      {"device_cross_realm_dma", A::MaliciousDevice, "reach realm memory outside its protected buffers", victim(),
       {"dma 0x100 read ipa=0x20000 len=4"}, Err::TranslationFault, 0},
      {"normal_device_reads_realm", A::MaliciousDevice, "read realm memory through a normal-world stream",
       with(victim(), {"plug 0x300 serial=4"}),
       {"smmu map sid=0x300 ipa=0x0 pa=0x3000", "dma 0x300 read ipa=0x0 len=4 t=0"}, Err::GpcDenied, 1},
      {"physical_replay_envelope", A::Physical, "replay a captured IDE packet", victim(),
       {"dma 0x100 write ipa=0x10000 len=4", "replay"}, Err::DiscardedAtRootPort, 1},
      {"physical_plug_after_attest", A::Physical, "swap the device after attestation", victim(),
       {"attest victim", "plug 0x100 bars=2,1 serial=99", "dma 0x100 read ipa=0x10000 len=4"},
       Err::DiscardedAtRootPort, 2},
      {"secure_reads_realm", A::SecureWorld, "read realm memory from the secure world", victim(),
       {"mem secure read pa=0x2000 len=4"}, Err::GpcDenied, 0},
  };
}

}  // namespace

const std::vector<AttackScenario>& attack_scenarios() {
  static const std::vector<AttackScenario> all = build_scenarios();
  return all;
}

const AttackScenario* find_scenario(std::string_view name) {
  for (const auto& s : attack_scenarios())
    if (s.name == name) return &s;
  return nullptr;
}

Result<AttackOutcome> run_attack_scenario(std::string_view name, const PlatformConfig& cfg) {
  const AttackScenario* s = find_scenario(name);
  if (s == nullptr) return Err::UnknownScenario;
  AttackOutcome out;
  Simulator sim(cfg);
  auto finish = [&]() {
    out.trace = sim.trace();
    return out;
  };
  for (const auto& line : s->setup) {
    StepOutcome r = sim.step(make(line));
    if (!sim.last_report().ok()) out.invariants_held = false;
    if (r.error != Err::None || !out.invariants_held) {
      out.message = "setup '" + line + "' failed: " + std::string(to_string(r.error));
      return finish();
    }
  }
  for (std::size_t i = 0; i < s->attack.size(); ++i) {
    StepOutcome r = sim.step(make(s->attack[i]));
    if (const Finding* f = sim.last_report().first_failure()) {
      out.invariants_held = false;
      out.message = s->attack[i] + ": " + f->property + " violated: " + f->witness;
      return finish();
    }
    if (r.error != Err::None) {
      out.blocked_by = r.error;
      out.at_step = i;
      break;
    }
  }
  out.blocked = out.blocked_by == s->expected && out.at_step == s->expected_step;
  out.message = out.blocked ? "blocked by " + std::string(to_string(out.blocked_by))
                            : "expected " + std::string(to_string(s->expected)) + " at step " +
                                  std::to_string(s->expected_step) + ", got " + std::string(to_string(out.blocked_by));
  return finish();
}

}  // namespace acai
