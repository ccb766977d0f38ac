#include "support.hpp"

#include "acai/monitor.hpp"

namespace acai {
namespace {

using testing::attached_realm;
using testing::cmd;
using testing::run_err;
using testing::run_ok;

TEST(Registry, PacksIntoOneWord) {
  RegistryEntry e{StreamId{0x0108}, VmId{3}, Pa{0x5000}, 2};
  // sid | vmid << 16 | granule index << 32 | bar count << 56, little endian.
  std::uint64_t word = 0x0108ULL | 3ULL << 16 | 5ULL << 32 | 2ULL << 56;
  std::array<std::uint8_t, 8> expect{};
  for (int i = 0; i < 8; ++i) expect[i] = static_cast<std::uint8_t>(word >> (8 * i));
  EXPECT_EQ(e.pack(), expect);
  EXPECT_EQ(RegistryEntry::unpack(e.pack()), e);
  EXPECT_EQ(e.rid(), Rid{0x0108});
}

TEST(Registry, RoundTripProperty) {
  for (std::uint64_t sid : {0ULL, 1ULL, 0x100ULL, 0xffffULL})
    for (std::uint64_t vm : {0ULL, 7ULL, 0xffffULL})
      for (std::uint64_t g : {0ULL, 1ULL, 0xffffffULL})
        for (unsigned bars : {0u, 6u, 255u}) {
          RegistryEntry e{StreamId{sid}, VmId{vm}, Pa{g * kGranuleSize}, static_cast<std::uint8_t>(bars)};
          EXPECT_EQ(RegistryEntry::unpack(e.pack()), e);
        }
}

TEST(Boot, ReservesSmmuStructuresInRoot) {
  Simulator sim;
  const Platform& p = sim.platform();
  auto n = p.mem.granule_count();
  ASSERT_TRUE(p.smmu.layout().has_value());
  EXPECT_EQ(p.smmu.layout()->stream_table, Pa{(n - 3) * kGranuleSize});
  for (std::size_t g = 0; g < n; ++g)
    EXPECT_EQ(p.mem.world_of(Pa{g * kGranuleSize}), g + kReservedGranules >= n ? World::Root : World::Normal);
  EXPECT_TRUE(p.monitor_state.booted);
  EXPECT_FALSE(p.smmu.config().ats_enabled);
  EXPECT_FALSE(p.smmu.config().stage2_bypass);
  Digest before = sim.last_digest();
  sim.step(cmd("boot"));
  EXPECT_EQ(sim.last_digest(), before);
}

TEST(SmmuRequests, AllowListOnly) {
  Simulator sim;
  for (const auto& f : smmu_allow_list())
    EXPECT_EQ(run_err(sim, "smmu config field=" + f + " value=3"), Err::None) << f;
  for (const auto& f : smmu_denied_fields())
    EXPECT_EQ(run_err(sim, "smmu config field=" + f + " value=1"), Err::FieldDenied) << f;
  EXPECT_EQ(run_err(sim, "smmu config field=made_up value=1"), Err::FieldDenied);
  EXPECT_EQ(sim.platform().smmu.config().fields.at("event_queue_threshold"), 3u);
  EXPECT_FALSE(sim.platform().smmu.config().stage2_bypass);
}

TEST(SmmuRequests, AtsAlwaysDenied) {
  Simulator sim;
  EXPECT_EQ(run_err(sim, "smmu ats sid=0x300"), Err::AtsDenied);
  EXPECT_FALSE(sim.platform().smmu.config().ats_enabled);
}

TEST(SmmuRequests, NormalStreamMapping) {
  Simulator sim;
  run_ok(sim, {"plug 0x300", "smmu map sid=0x300 ipa=0x0 pa=0x4000"});
  const Platform& p = sim.platform();
  ASSERT_NE(p.smmu.ste(StreamTable::Normal, StreamId{0x300}), nullptr);
  EXPECT_EQ(p.smmu.stage2(StreamTable::Normal, StreamId{0x300})->at(Ipa{0}), Pa{0x4000});
  EXPECT_EQ(p.rmm_state.owners.device(Pa{0x4000}), StreamId{0x300});
  EXPECT_EQ(run_err(sim, "smmu map sid=0x300 ipa=0x1000 pa=0x100000"), Err::OutOfRange);
  // A second device may not reach the same page.
  EXPECT_EQ(run_err(sim, "smmu map sid=0x308 ipa=0x0 pa=0x4000"), Err::PaOwnedByOtherDevice);
  run_ok(sim, {"smmu unmap sid=0x300 ipa=0x0"});
  EXPECT_FALSE(sim.platform().rmm_state.owners.device(Pa{0x4000}).has_value());
  run_ok(sim, {"smmu map sid=0x308 ipa=0x0 pa=0x4000"});
}

TEST(Attach, BindsDeviceToRealm) {
  Simulator sim;
  attached_realm(sim);
  const Platform& p = sim.platform();
  VmId vm = *sim.realm("tenant");
  const RegistryEntry* e = p.monitor_state.registry.find(StreamId{0x100});
  ASSERT_NE(e, nullptr);
  EXPECT_EQ(e->vmid, vm);
  EXPECT_EQ(e->config_pa, Pa{0x1000});
  EXPECT_EQ(e->bar_count, 2);
  const StreamTableEntry* ste = p.smmu.ste(StreamTable::Realm, StreamId{0x100});
  ASSERT_NE(ste, nullptr);
  EXPECT_TRUE(ste->valid);
  EXPECT_EQ(ste->owner, vm);
  EXPECT_FALSE(ste->ats_enabled);
  EXPECT_TRUE(p.fabric.link_secure(Rid{0x100}));
  EXPECT_FALSE(p.monitor_state.stream_table_locked);
  EXPECT_EQ(p.mem.world_of(Pa{0x1000}), World::Realm);
}

TEST(Attach, OrderIsLockResetKeyAttestConfigUnlock) {
  Simulator sim;
  attached_realm(sim);
  std::vector<std::string> ops;
  for (const auto& e : sim.trace())
    if ((e.actor == "monitor" || e.actor == "device") && e.step == sim.steps() - 1) ops.push_back(e.op);
  std::vector<std::string> expect{"smc_device_attach", "lock",        "bus_probe",  "device_reset",
                                  "ide_program_key",   "spdm_attest", "config_read", "config_write",
                                  "ste_write",         "registry_record", "unlock"};
  EXPECT_EQ(ops, expect);
}

TEST(Attach, FailureLeavesNoTrace) {
  Simulator sim;
  run_ok(sim, {"emulate 0x100 bars=1", "delegate 0x1000", "realm_create tenant"});
  Digest before = sim.last_digest();
  EXPECT_EQ(run_err(sim, "data_create tenant src=0x0 dst=0x1000 ipa=0x30000 attach_dev dev=0x100"), Err::AttestFailed);
  const Platform& p = sim.platform();
  EXPECT_TRUE(p.monitor_state.registry.entries().empty());
  EXPECT_FALSE(p.fabric.root_port_key(Rid{0x100}).has_value());
  EXPECT_EQ(p.smmu.ste(StreamTable::Realm, StreamId{0x100}), nullptr);
  EXPECT_FALSE(p.monitor_state.stream_table_locked);
  // Only the realm's pending-attach flag differs.
  EXPECT_NE(sim.last_digest(), before);
  EXPECT_TRUE(p.rmm_state.find(*sim.realm("tenant"))->attach_requested);
  EXPECT_EQ(run_err(sim, "activate tenant"), Err::AttachIncomplete);
}

TEST(Attach, MissingDevice) {
  Simulator sim;
  run_ok(sim, {"delegate 0x1000", "realm_create tenant"});
  EXPECT_EQ(run_err(sim, "data_create tenant src=0x0 dst=0x1000 ipa=0x30000 attach_dev dev=0x100"),
            Err::DeviceNotFound);
}

TEST(Attach, ClearsHypervisorTranslationsForTheStream) {
  Simulator sim;
  run_ok(sim, {"plug 0x100 bars=2,1 serial=7", "smmu map sid=0x100 ipa=0x0 pa=0x8000"});
  attached_realm(sim);
  const Platform& p = sim.platform();
  const Stage2Map* normal = p.smmu.stage2(StreamTable::Normal, StreamId{0x100});
  EXPECT_TRUE(normal == nullptr || normal->empty());
  EXPECT_FALSE(p.rmm_state.owners.device(Pa{0x8000}).has_value());
}

TEST(DelegateProtMem, Checks) {
  Simulator sim;
  attached_realm(sim);
  run_ok(sim, {"activate tenant"});
  Platform& p = sim.platform();
  VmId vm = *sim.realm("tenant");
  StreamId sid{0x100};
  EXPECT_EQ(monitor::smc_delegate_prot_mem(p, VmId{99}, sid, Ipa{0x10000}, Pa{0x2000}).error(), Err::NotOwner);
  EXPECT_EQ(monitor::smc_delegate_prot_mem(p, vm, sid, Ipa{0x10000}, Pa{0x100000}).error(), Err::OutOfRange);
  EXPECT_EQ(monitor::smc_delegate_prot_mem(p, vm, sid, Ipa{0x10000}, Pa{0x8000}).error(), Err::WrongWorld);
  // The pair must be the realm's own translation.
  EXPECT_EQ(monitor::smc_delegate_prot_mem(p, vm, sid, Ipa{0x10000}, Pa{0x3000}).error(), Err::NotOwner);
  ASSERT_TRUE(monitor::smc_delegate_prot_mem(p, vm, sid, Ipa{0x10000}, Pa{0x2000}));
  EXPECT_EQ(monitor::smc_delegate_prot_mem(p, vm, sid, Ipa{0x10000}, Pa{0x2000}).error(), Err::IpaInUse);
  EXPECT_EQ(p.rmm_state.owners.device(Pa{0x2000}), sid);
  EXPECT_EQ(p.smmu.stage2(StreamTable::Realm, sid)->at(Ipa{0x10000}), Pa{0x2000});
}

TEST(Detach, DestroyReleasesEverything) {
  Simulator sim;
  attached_realm(sim);
  run_ok(sim, {"activate tenant", "prot_mem tenant dev=0x100 sg=0x10000:4096", "destroy tenant"});
  const Platform& p = sim.platform();
  EXPECT_TRUE(p.monitor_state.registry.entries().empty());
  EXPECT_EQ(p.smmu.ste(StreamTable::Realm, StreamId{0x100}), nullptr);
  EXPECT_EQ(p.smmu.stage2(StreamTable::Realm, StreamId{0x100}), nullptr);
  EXPECT_FALSE(p.fabric.root_port_key(Rid{0x100}).has_value());
  for (std::uint64_t pa = 0x1000; pa <= 0x7000; pa += 0x1000) {
    if (pa == 0x4000) continue;  // delegated but never given to the realm
    EXPECT_EQ(p.mem.world_of(Pa{pa}), World::Normal) << pa;
    EXPECT_TRUE(p.mem.granule(Pa{pa}).contents.is_zero()) << pa;
    EXPECT_FALSE(p.rmm_state.owners.mapped(Pa{pa})) << pa;
  }
  // Granules the realm never used stay delegated until the hypervisor asks.
  EXPECT_EQ(p.mem.world_of(Pa{0x4000}), World::Realm);
  run_ok(sim, {"undelegate 0x4000"});
  // The device can be attached again by a new realm.
  attached_realm(sim, "second");
}

TEST(Challenge, FailsWithoutLink) {
  Simulator sim;
  attached_realm(sim);
  Platform& p = sim.platform();
  EXPECT_TRUE(monitor::challenge_device(p, StreamId{0x100}, 1));
  sim.step(cmd("plug 0x100 bars=2,1 serial=99"));
  EXPECT_EQ(monitor::challenge_device(sim.platform(), StreamId{0x100}, 1).error(), Err::AttestFailed);
}

}  // namespace
}  // namespace acai
