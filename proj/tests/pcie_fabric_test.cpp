#include <gtest/gtest.h>

#include "acai/pcie_fabric.hpp"

namespace acai {
namespace {

const BusAddr kBus{0x100};
const Rid kRid{0x100};
const AccessorCtx kRoot = AccessorCtx::monitor();

DeviceSpec genuine(std::vector<std::uint32_t> bars = {2, 1}) {
  DeviceSpec s;
  s.bus = kBus;
  s.bar_granules = std::move(bars);
  s.serial = 42;
  return s;
}

TxnRequest write_req(Bytes payload, bool t_bit = true) {
  TxnRequest r;
  r.kind = TxnKind::DmaWrite;
  r.t_bit = t_bit;
  r.address = 0x10000;
  r.payload = std::move(payload);
  return r;
}

// Independent re-derivation of the configuration-space layout.
TEST(ConfigSpace, ImageLayout) {
  Digest fw = sha256(std::string_view("fw-1.0"));
  std::vector<std::uint32_t> bars{2, 1};
  Bytes img = config_space_image(Rid{0x0108}, bars, fw);
  Bytes expect{0xb5, 0x13, 0x08, 0x01, 0x02};
  for (std::uint64_t size : {0x2000ULL, 0x1000ULL})
    for (int i = 0; i < 8; ++i) expect.push_back(static_cast<std::uint8_t>(size >> (8 * i)));
  expect.insert(expect.end(), fw.begin(), fw.end());
  EXPECT_EQ(img, expect);
}

TEST(Fabric, PlugResetsDevice) {
  PcieFabric f;
  auto& d = f.plug(genuine({1, 1, 1, 1, 1, 1, 1, 1}));
  EXPECT_EQ(d.spec.bar_granules.size(), kMaxBars);
  EXPECT_EQ(d.bar_mem.size(), kMaxBars);
  EXPECT_FALSE(d.link_key.has_value());
  Page expect;
  expect.assign(config_space_image(kRid, d.spec.bar_granules, d.firmware_digest));
  EXPECT_EQ(d.config_space.digest(), expect.digest());
}

TEST(Fabric, KeyProgrammingIsRootOnlyAndUnique) {
  PcieFabric f;
  f.plug(genuine());
  EXPECT_EQ(f.ide_program_key(kRid, KeyId{7}, AccessorCtx::hypervisor()).error(), Err::NotRoot);
  EXPECT_FALSE(f.link_secure(kRid));
  ASSERT_TRUE(f.ide_program_key(kRid, KeyId{7}, kRoot));
  EXPECT_TRUE(f.link_secure(kRid));
  EXPECT_EQ(f.ide_program_key(kRid, KeyId{8}, kRoot).error(), Err::RidInUse);
  EXPECT_EQ(f.root_port_key(kRid), KeyId{7});
  ASSERT_EQ(f.key_writes().size(), 3u);
  EXPECT_FALSE(f.key_writes()[0].committed);
  EXPECT_TRUE(f.key_writes()[1].committed);
  EXPECT_EQ(f.ide_erase_key(kRid, AccessorCtx::hypervisor()).error(), Err::NotRoot);
  ASSERT_TRUE(f.ide_erase_key(kRid, kRoot));
  EXPECT_FALSE(f.root_port_key(kRid).has_value());
}

TEST(Fabric, SealedTrafficDecryptsOnceInOrder) {
  PcieFabric f;
  f.plug(genuine());
  ASSERT_TRUE(f.ide_program_key(kRid, KeyId{7}, kRoot));
  Bytes data{1, 2, 3, 4};
  Delivery d = f.device_send(kBus, write_req(data));
  EXPECT_EQ(d.verdict, RootPortVerdict::DecryptedOk);
  EXPECT_EQ(d.txn.payload, data);
  ASSERT_EQ(f.taps().size(), 1u);
  EXPECT_FALSE(f.taps()[0].plaintext_exposed);

  // Replaying the captured packet reuses a consumed sequence number.
  auto replayed = f.replay_capture();
  ASSERT_TRUE(replayed.has_value());
  EXPECT_EQ(replayed->verdict, RootPortVerdict::Discard);
  EXPECT_EQ(f.device_send(kBus, write_req(data)).verdict, RootPortVerdict::DecryptedOk);
}

TEST(Fabric, UnkeyedOrForgedTrafficIsDiscarded) {
  PcieFabric f;
  f.plug(genuine());
  DeviceSpec other = genuine();
  other.bus = BusAddr{0x200};
  f.plug(other);
  EXPECT_EQ(f.device_send(kBus, write_req({1})).verdict, RootPortVerdict::Discard);  // no key yet
  ASSERT_TRUE(f.ide_program_key(kRid, KeyId{7}, kRoot));
  TxnRequest forged = write_req({1});
  forged.rid_override = kRid;
  EXPECT_EQ(f.device_send(BusAddr{0x200}, forged).verdict, RootPortVerdict::Discard);
  EXPECT_EQ(f.device_send(kBus, write_req({1}, false)).verdict, RootPortVerdict::PlaintextNormal);
}

TEST(Fabric, SwappedDeviceLosesTheLink) {
  PcieFabric f;
  f.plug(genuine());
  ASSERT_TRUE(f.ide_program_key(kRid, KeyId{7}, kRoot));
  DeviceSpec swap = genuine();
  swap.serial = 99;
  f.plug(swap);
  EXPECT_FALSE(f.link_secure(kRid));
  EXPECT_EQ(f.device_send(kBus, write_req({1})).verdict, RootPortVerdict::Discard);
  EXPECT_EQ(f.host_to_device(kRid, TxnKind::MmioWrite, 0, {1}).error(), Err::DiscardedAtDevice);
}

TEST(Fabric, HostToDeviceNeedsKey) {
  PcieFabric f;
  f.plug(genuine());
  EXPECT_EQ(f.host_to_device(kRid, TxnKind::MmioWrite, 0, {1}).error(), Err::DiscardedAtRootPort);
  ASSERT_TRUE(f.ide_program_key(kRid, KeyId{7}, kRoot));
  auto got = f.host_to_device(kRid, TxnKind::MmioWrite, 0, {9, 8});
  ASSERT_TRUE(got);
  EXPECT_EQ(*got, (Bytes{9, 8}));
  EXPECT_FALSE(f.taps().back().plaintext_exposed);
}

TEST(Fabric, AttestationSignatures) {
  PcieFabric f;
  f.plug(genuine());
  auto r = f.spdm_attest(kBus, 5);
  ASSERT_TRUE(r);
  EXPECT_TRUE(verify_device_signature(*r));
  EXPECT_EQ(r->identity, 42u);
  EXPECT_EQ(r->nonce, 5u);
  DeviceReport tampered = *r;
  tampered.debug_disabled = false;
  EXPECT_FALSE(verify_device_signature(tampered));

  DeviceSpec fake = genuine();
  fake.kind = DeviceKind::Emulated;
  f.plug(fake);
  EXPECT_EQ(f.spdm_attest(kBus, 5).error(), Err::AttestFailed);
  auto unchecked = f.spdm_attest(kBus, 5, false);
  ASSERT_TRUE(unchecked);
  EXPECT_FALSE(verify_device_signature(*unchecked));
  EXPECT_EQ(f.spdm_attest(BusAddr{0x300}, 1).error(), Err::DeviceNotFound);
}

TEST(Fabric, DeviceLocalMemorySpansPages) {
  DeviceModel d;
  Bytes data(10, 0x5a);
  d.write_local(kGranuleSize - 4, data);
  EXPECT_EQ(d.read_local(kGranuleSize - 4, 10), data);
  EXPECT_EQ(d.read_local(kGranuleSize + 6, 2), (Bytes{0, 0}));
}

}  // namespace
}  // namespace acai
