#include "support.hpp"

namespace acai {
namespace {

using testing::attached_realm;
using testing::run_ok;

TEST(Invariants, NamesInReportOrder) {
  const auto& names = property_names();
  ASSERT_GE(names.size(), 5u);
  EXPECT_EQ(std::vector<std::string>(names.begin(), names.begin() + 5),
            (std::vector<std::string>{"I1", "I2", "I3", "I4", "I5"}));
  Simulator sim;
  const auto& findings = sim.last_report().findings;
  ASSERT_EQ(findings.size(), names.size());
  for (std::size_t i = 0; i < names.size(); ++i) EXPECT_EQ(findings[i].property, names[i]);
}

class Corrupt : public ::testing::Test {
 protected:
  void SetUp() override {
    attached_realm(sim);
    run_ok(sim, {"activate tenant", "prot_mem tenant dev=0x100 sg=0x10000:4096"});
    ASSERT_TRUE(check_invariants(sim.platform()).ok());
  }
  RealmVm& tenant() { return *sim.platform().rmm_state.find(*sim.realm("tenant")); }
  void expect_fails(const std::string& property) {
    InvariantReport r = check_invariants(sim.platform());
    const Finding* f = r.find(property);
    ASSERT_NE(f, nullptr);
    EXPECT_FALSE(f->pass) << property;
    EXPECT_FALSE(f->witness.empty());
  }
  Simulator sim;
};

TEST_F(Corrupt, MissingEvidenceBreaksIdentity) {
  tenant().device_report.reset();
  expect_fails("I1");
}

TEST_F(Corrupt, ForgedEvidenceBreaksIdentity) {
  tenant().device_report->rid = Rid{0x777};
  expect_fails("I1");
}

TEST_F(Corrupt, TamperedEvidenceBreaksIdentity) {
  tenant().device_report->firmware_digest[0] ^= 1;
  expect_fails("I1");
}

TEST_F(Corrupt, OrphanedRegistryBreaksOwnership) {
  tenant().attached_device.reset();
  expect_fails("I2");
}

TEST_F(Corrupt, ForeignBarMappingBreaksOwnership) {
  run_ok(sim, {"delegate 0x8000", "realm_create other", "data_create other src=0x0 dst=0x8000 ipa=0x10000"});
  sim.platform().rmm_state.find(*sim.realm("other"))->stage2[Ipa{0x90000}] = Pa{0x5000};
  expect_fails("I2");
}

TEST_F(Corrupt, StrayRealmStreamMappingBreaksBinding) {
  sim.platform().smmu.backdoor_map(StreamTable::Realm, StreamId{0x100}, Ipa{0x11000}, Pa{0x7000});
  expect_fails("I3");
}

TEST_F(Corrupt, AliasedGuestPageBreaksInjectivity) {
  tenant().stage2[Ipa{0x99000}] = Pa{0x2000};
  expect_fails("I4");
}

TEST_F(Corrupt, SharedDevicePageBreaksOverlap) {
  sim.platform().smmu.backdoor_map(StreamTable::Normal, StreamId{0x200}, Ipa{0x0}, Pa{0x2000});
  expect_fails("I5");
}

TEST_F(Corrupt, ReportFailureListing) {
  tenant().stage2[Ipa{0x99000}] = Pa{0x2000};
  InvariantReport r = check_invariants(sim.platform());
  EXPECT_FALSE(r.ok());
  ASSERT_NE(r.first_failure(), nullptr);
  auto failed = r.failed();
  EXPECT_NE(std::find(failed.begin(), failed.end(), "I4"), failed.end());
}

// Property: random honest command sequences never break an invariant.
TEST(Invariants, HoldAlongHonestLifecycles) {
  for (int round = 0; round < 3; ++round) {
    Simulator sim;
    attached_realm(sim);
    run_ok(sim, {"activate tenant", "attest tenant", "prot_mem tenant dev=0x100 sg=0x10000:8192",
                 "dma 0x100 read ipa=0x10000 len=64", "dma 0x100 write ipa=0x11000 len=64", "destroy tenant",
                 "undelegate 0x4000", "check"});
    EXPECT_TRUE(sim.last_report().ok());
  }
}

}  // namespace
}  // namespace acai
