#include "acai/simulator.hpp"

#include <fstream>
#include <json.hpp>
#include <sstream>

#include "acai/adversary.hpp"
#include "acai/io_paths.hpp"

namespace acai {

std::string to_json_line(const TraceEvent& e) {
  nlohmann::ordered_json args = nlohmann::ordered_json::object();
  for (const auto& [k, v] : e.args) args[k] = v;
  nlohmann::ordered_json j;
  j["step"] = e.step;
  j["actor"] = e.actor;
  j["op"] = e.op;
  j["args"] = std::move(args);
  j["result"] = e.result;
  j["state_digest"] = e.state_digest;
  return j.dump();
}

namespace {

std::string actor_of(const Command& c) {
  const std::string& n = c.name;
  if (n == "boot") return "monitor";
  if (n == "plug" || n == "unplug" || n == "replay") return "physical";
  if (n == "prot_mem" || n == "mmio" || n == "attest") return "realm:" + c.positional[0];
  if (n == "dma" || n == "compute") return "device:" + c.positional[0];
  if (n == "mem") {
    const std::string& who = c.positional[0];
    if (who == "hv") return "hypervisor";
    if (who == "monitor" || who == "secure") return who;
    return "realm:" + who;
  }
  if (n == "verify" || n == "policy") return "verifier";
  if (n == "attack" || n == "check") return "harness";
  return "hypervisor";
}

std::vector<std::pair<std::string, std::string>> args_of(const Command& c) {
  std::vector<std::pair<std::string, std::string>> out;
  static const char* const kPos[] = {"target", "mode"};
  for (std::size_t i = 0; i < c.positional.size() && i < 2; ++i) out.emplace_back(kPos[i], c.positional[i]);
  for (const auto& f : c.flags) out.emplace_back(f, "1");
  for (const auto& [k, v] : c.kv) out.emplace_back(k, v);
  return out;
}

Bytes hex_data(const std::string& v) { return from_hex(v.starts_with("0x") ? v.substr(2) : v).value_or(Bytes{}); }

DeviceSpec device_spec(const Command& c, DeviceKind kind) {
  DeviceSpec spec;
  spec.bus = BusAddr{c.pos_num(0)};
  spec.kind = kind;
  if (c.has("bars")) spec.bar_granules = parse_counts(c.kv.at("bars")).value_or(std::vector<std::uint32_t>{});
  if (c.has("firmware")) spec.firmware = c.kv.at("firmware");
  spec.debug_disabled = !c.flags.contains("debug");
  spec.serial = c.num("serial", spec.bus.value);
  return spec;
}

StepOutcome from(Err e) { return {e, {}}; }
StepOutcome from(const Status& s) { return {s.error(), {}}; }
StepOutcome from(const Result<Bytes>& r) { return r ? StepOutcome{Err::None, *r} : StepOutcome{r.error(), {}}; }

}  // namespace

Simulator::Simulator(const PlatformConfig& cfg, std::string policy_dir, bool tracing)
    : p_(cfg), policy_dir_(std::move(policy_dir)), tracing_(tracing) {
  Command boot;
  boot.name = "boot";
  step(boot);
}

std::optional<VmId> Simulator::realm(const std::string& name) const {
  const RealmVm* r = p_.rmm_state.find(name);
  if (r == nullptr) return std::nullopt;
  return r->vmid;
}

const AttestationReport* Simulator::report(const std::string& realm) const {
  auto it = reports_.find(realm);
  return it == reports_.end() ? nullptr : &it->second;
}

StepOutcome Simulator::apply(const Command& cmd) {
  p_.clear_observations();
  auto ev = p_.open(actor_of(cmd), cmd.name, args_of(cmd));
  StepOutcome out = dispatch(cmd);
  p_.close(ev, out.error);
  ++step_;
  return out;
}

StepOutcome Simulator::step(const Command& cmd) {
  StepOutcome out = apply(cmd);
  report_ = check_invariants(p_);
  digest_ = state_digest(p_);
  if (tracing_) {
    std::string digest = to_hex(digest_);
    for (const auto& j : p_.journal)
      trace_.push_back({step_ - 1, j.actor, j.op, j.args, j.result == Err::None ? "ok" : std::string(to_string(j.result)),
                        digest});
  }
  return out;
}

Result<VerifierPolicy> Simulator::policy(const std::string& ref) const {
  if (auto it = policies_.find(ref); it != policies_.end()) return it->second;
  std::ifstream in(ref.starts_with("/") ? ref : policy_dir_ + "/" + ref);
  if (!in) return Err::InvalidArgument;
  std::stringstream text;
  text << in.rdbuf();
  return parse_policy(text.str());
}

StepOutcome Simulator::dispatch(const Command& c) {
  Platform& p = p_;
  const std::string& n = c.name;
  auto vm_of = [&](const std::string& name) { return realm(name); };

  if (n == "boot") {
    monitor::boot_init(p);
    return {};
  }
  if (n == "plug" || n == "emulate") {
    p.fabric.plug(device_spec(c, n == "plug" ? DeviceKind::Genuine : DeviceKind::Emulated));
    return {};
  }
  if (n == "unplug") {
    p.fabric.unplug(BusAddr{c.pos_num(0)});
    return {};
  }
  if (n == "delegate") return from(rmm::rmi_granule_delegate(p, Pa{c.pos_num(0)}));
  if (n == "undelegate") return from(rmm::rmi_granule_undelegate(p, Pa{c.pos_num(0)}));
  if (n == "realm_create") {
    auto vm = rmm::rmi_realm_create(p, c.positional[0]);
    return from(vm ? Err::None : vm.error());
  }
  if (n == "data_create") {
    auto vm = vm_of(c.positional[0]);
    if (!vm) return from(Err::UnknownVm);
    std::optional<AttachParams> attach;
    if (c.flags.contains("attach_dev")) {
      attach = AttachParams{BusAddr{c.num("dev")}, {}};
      if (c.has("bars")) {
        auto regions = parse_regions(c.kv.at("bars"));
        for (const auto& r : *regions) attach->bars.push_back({r.ipa, r.size});
      }
    }
    return from(rmm::rmi_data_create(p, *vm, Pa{c.num("src")}, Pa{c.num("dst")}, Ipa{c.num("ipa")}, attach));
  }
  if (n == "activate" || n == "destroy") {
    auto vm = vm_of(c.positional[0]);
    if (!vm) return from(Err::UnknownVm);
    if (n == "destroy") reports_.erase(c.positional[0]);
    return from(n == "activate" ? rmm::rmi_realm_activate(p, *vm) : rmm::rmi_realm_destroy(p, *vm));
  }
  if (n == "prot_mem") {
    auto vm = vm_of(c.positional[0]);
    if (!vm) return from(Err::UnknownVm);
    return from(rmm::rsi_delegate_prot_mem(p, *vm, *parse_regions(c.kv.at("sg")), StreamId{c.num("dev")}));
  }
  if (n == "dma") {
    DmaRequest req;
    req.op = c.positional[1] == "write" ? AccessOp::Write : AccessOp::Read;
    req.ipa = Ipa{c.num("ipa")};
    req.len = c.num("len");
    req.t_bit = c.num("t", 1) == 1;
    if (c.has("rid")) req.rid_override = Rid{c.num("rid")};
    req.device_offset = c.num("off");
    return from(device_dma(p, BusAddr{c.pos_num(0)}, req));
  }
  if (n == "compute") {
    return from(device_compute(p, BusAddr{c.pos_num(0)}, c.kv.at("kernel"), Ipa{c.num("src")}, Ipa{c.num("dst")},
                               c.num("len"), c.num("t", 1) == 1));
  }
  if (n == "mmio") {
    auto vm = vm_of(c.positional[0]);
    if (!vm) return from(Err::UnknownVm);
    bool write = c.positional[1] == "write";
    Bytes data = write ? hex_data(c.kv.at("data")) : Bytes{};
    return from(mmio_access(p, *vm, Ipa{c.num("ipa")}, write ? AccessOp::Write : AccessOp::Read, data, c.num("len", 4)));
  }
  if (n == "mem") {
    const std::string& who = c.positional[0];
    bool write = c.positional[1] == "write";
    Bytes data = write ? hex_data(c.kv.at("data")) : Bytes{};
    if (who == "hv" || who == "monitor" || who == "secure") {
      AccessorCtx ctx = who == "hv" ? AccessorCtx::hypervisor() : who == "monitor" ? AccessorCtx::monitor() : AccessorCtx::secure();
      Pa pa{c.num("pa")};
      if (write) return from(physical_write(p, ctx, pa, data));
      return from(physical_read(p, ctx, pa, c.num("len")));
    }
    auto vm = vm_of(who);
    if (!vm) return from(Err::UnknownVm);
    if (write) return from(realm_write(p, *vm, Ipa{c.num("ipa")}, data));
    return from(realm_read(p, *vm, Ipa{c.num("ipa")}, c.num("len")));
  }
  if (n == "attest") {
    auto vm = vm_of(c.positional[0]);
    if (!vm) return from(Err::UnknownVm);
    auto report = rmm::attestation_report(p, *vm, 0xa77e5700 + step_);
    if (!report) return from(report.error());
    reports_[c.positional[0]] = *report;
    return {};
  }
  if (n == "verify") {
    auto it = reports_.find(c.positional[0]);
    if (it == reports_.end()) return from(Err::NotActive);
    auto pol = policy(c.kv.at("policy"));
    if (!pol) return from(pol.error());
    Verdict v = verify_report(it->second, *pol);
    p.log("verifier", "verify_report", {{"realm", c.positional[0]}, {"verdict", v.pass ? "pass" : "fail"}}, v.reason);
    return from(v.reason);
  }
  if (n == "policy") {
    std::string text;
    for (const auto& [k, v] : c.kv) text += k + "=" + v + "\n";
    auto pol = parse_policy(text);
    if (!pol) return from(pol.error());
    policies_[c.positional[0]] = *pol;
    return {};
  }
  if (n == "attack") {
    auto outcome = run_attack_scenario(c.positional[0], p.cfg);
    if (!outcome) return from(outcome.error());
    p.log("harness", "run_attack_scenario",
          {{"name", c.positional[0]}, {"blocked_by", std::string(to_string(outcome->blocked_by))}},
          outcome->blocked ? Err::None : Err::AttackNotBlocked);
    return from(outcome->blocked ? Err::None : Err::AttackNotBlocked);
  }
  if (n == "check") return {};
  if (n == "smmu") {
    const std::string& sub = c.positional[0];
    SmmuHypRequest req;
    if (sub == "map") req = SmmuMapRequest{StreamId{c.num("sid")}, Ipa{c.num("ipa")}, Pa{c.num("pa")}};
    else if (sub == "unmap") req = SmmuUnmapRequest{StreamId{c.num("sid")}, Ipa{c.num("ipa")}};
    else if (sub == "config") req = SmmuConfigRequest{c.kv.at("field"), c.num("value")};
    else req = SmmuAtsRequest{StreamId{c.num("sid")}};
    return from(monitor::smc_smmu_request(p, req));
  }
  if (n == "replay") {
    auto delivery = p.fabric.replay_capture();
    if (!delivery) return from(Err::InvalidArgument);
    auto moved = p.smmu.translate_transaction(delivery->txn, delivery->verdict, p.mem);
    p.log("physical", "replay_envelope", {{"rid", hex_addr(delivery->txn.rid.value)},
                                          {"verdict", std::string(to_string(delivery->verdict))}},
          moved.error());
    return from(moved);
  }
  if (n == "ide_key") {
    // Only the monitor can reach the root-port key store.
    return from(p.fabric.ide_program_key(Rid{c.num("rid")}, KeyId{c.num("key", 0xbad)}, AccessorCtx::hypervisor()));
  }
  return from(Err::ParseError);
}

RunResult run_script(std::string_view text, const RunOptions& opts) {
  RunResult result;
  auto parsed = parse_script(text);
  if (auto* failure = std::get_if<ParseFailure>(&parsed)) {
    result.exit_code = kExitParse;
    result.message = "line " + std::to_string(failure->line) + ": " + failure->message;
    return result;
  }
  const auto& cmds = std::get<std::vector<Command>>(parsed);
  Simulator sim(opts.platform, opts.policy_dir);
  auto finish = [&](int code, std::string message) {
    result.exit_code = code;
    result.message = std::move(message);
    result.trace = sim.trace();
    result.report = sim.last_report();
    return result;
  };
  if (!sim.last_report().ok()) return finish(kExitViolation, "invariant violated at boot");

  for (std::size_t i = 0; i < cmds.size(); ++i) {
    const Command& cmd = cmds[i];
    StepOutcome out = sim.step(cmd);
    result.outcomes.push_back(out);
    std::string where = "line " + std::to_string(cmd.line) + " (" + cmd.name + ")";
    if (const Finding* f = sim.last_report().first_failure())
      return finish(kExitViolation, where + ": " + f->property + " violated: " + f->witness);

    const Command* expect = i + 1 < cmds.size() && cmds[i + 1].name == "expect" ? &cmds[i + 1] : nullptr;
    if (expect == nullptr) {
      if (out.error != Err::None) return finish(kExitExpectation, where + ": unexpected error " + std::string(to_string(out.error)));
      continue;
    }
    ++i;
    if (expect->has("error")) {
      Err want = *parse_err(expect->kv.at("error"));
      if (out.error != want)
        return finish(kExitExpectation, "line " + std::to_string(expect->line) + ": expected " + std::string(to_string(want)) +
                                            ", got " + (out.error == Err::None ? "ok" : std::string(to_string(out.error))));
    } else {
      Bytes want = hex_data(expect->kv.at("data"));
      if (out.error != Err::None || out.data != want)
        return finish(kExitExpectation, "line " + std::to_string(expect->line) + ": expected data " + to_hex(want) +
                                            ", got " + (out.error == Err::None ? to_hex(out.data) : std::string(to_string(out.error))));
    }
  }
  return finish(kExitOk, "ok");
}

std::map<std::string, std::size_t> count_interface_calls(const std::vector<TraceEvent>& trace, std::uint64_t from_step) {
  std::map<std::string, std::size_t> counts;
  for (const auto& e : trace) {
    if (e.step < from_step) continue;
    if (e.op.starts_with("rmi_") || e.op.starts_with("rsi_") || e.op.starts_with("smc_")) ++counts[e.op];
  }
  return counts;
}

std::optional<std::uint64_t> first_step(const std::vector<TraceEvent>& trace, std::string_view op) {
  for (const auto& e : trace)
    if (e.op == op && e.result == "ok") return e.step;
  return std::nullopt;
}

}  // namespace acai
