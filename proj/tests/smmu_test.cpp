#include <gtest/gtest.h>

#include "acai/smmu.hpp"

namespace acai {
namespace {

const AccessorCtx kRoot = AccessorCtx::monitor();
const StreamId kSid{0x100};

PcieTransaction dma(TxnKind kind, std::uint64_t addr, bool t_bit, Bytes payload = {}, std::uint32_t len = 4) {
  PcieTransaction t;
  t.rid = Rid{kSid.value};
  t.kind = kind;
  t.address = addr;
  t.t_bit = t_bit;
  t.payload = std::move(payload);
  t.length = len;
  return t;
}

class SmmuTest : public ::testing::Test {
 protected:
  void SetUp() override {
    StreamTableEntry normal{kSid, true, World::Normal, 0, false, std::nullopt, std::nullopt};
    ASSERT_TRUE(smmu.ste_write(StreamTable::Normal, normal, kRoot));
    ASSERT_TRUE(smmu.s2_write(StreamTable::Normal, kSid, Ipa{0x10000}, Pa{0x1000}, kRoot));
  }
  WorldMemory mem{8};
  Smmu smmu;
};

TEST_F(SmmuTest, TableWritesNeedRoot) {
  StreamTableEntry e{StreamId{0x200}, true, World::Normal, 0, false, std::nullopt, std::nullopt};
  EXPECT_EQ(smmu.ste_write(StreamTable::Normal, e, AccessorCtx::hypervisor()).error(), Err::NotRoot);
  EXPECT_EQ(smmu.s2_write(StreamTable::Realm, kSid, Ipa{0}, Pa{0}, AccessorCtx::hypervisor()).error(), Err::NotRoot);
  EXPECT_EQ(smmu.s2_clear(StreamTable::Normal, kSid, AccessorCtx::secure()).error(), Err::NotRoot);
  EXPECT_EQ(smmu.ste(StreamTable::Normal, StreamId{0x200}), nullptr);
  ASSERT_FALSE(smmu.table_writes().empty());
  EXPECT_FALSE(smmu.table_writes().back().committed);
}

TEST_F(SmmuTest, NormalDmaTranslatesThroughNormalTable) {
  ASSERT_TRUE(smmu.translate_transaction(dma(TxnKind::DmaWrite, 0x10004, false, {7, 8}), RootPortVerdict::PlaintextNormal, mem));
  EXPECT_EQ(*mem.read(AccessorCtx::hypervisor(), Pa{0x1004}, 2), (Bytes{7, 8}));
  auto r = smmu.translate_transaction(dma(TxnKind::DmaRead, 0x10004, false, {}, 2), RootPortVerdict::PlaintextNormal, mem);
  ASSERT_TRUE(r);
  EXPECT_EQ(*r, (Bytes{7, 8}));
}

TEST_F(SmmuTest, UnmappedIpaFaults) {
  EXPECT_EQ(smmu.translate_transaction(dma(TxnKind::DmaRead, 0x20000, false), RootPortVerdict::PlaintextNormal, mem).error(),
            Err::TranslationFault);
}

TEST_F(SmmuTest, DiscardedNeverReachesMemory) {
  EXPECT_EQ(smmu.translate_transaction(dma(TxnKind::DmaWrite, 0x10000, true, {1}), RootPortVerdict::Discard, mem).error(),
            Err::DiscardedAtRootPort);
  EXPECT_TRUE(mem.granule(Pa{0x1000}).contents.is_zero());
}

// Only a decrypted T=1 packet selects the realm stream table.
TEST_F(SmmuTest, WorldExtensionFromVerdict) {
  EXPECT_EQ(smmu.translate_transaction(dma(TxnKind::DmaRead, 0x10000, true), RootPortVerdict::DecryptedOk, mem).error(),
            Err::NoSte);
  StreamTableEntry realm{kSid, true, World::Realm, 1, false, VmId{3}, KeyId{0x103}};
  ASSERT_TRUE(smmu.ste_write(StreamTable::Realm, realm, kRoot));
  EXPECT_EQ(smmu.translate_transaction(dma(TxnKind::DmaRead, 0x10000, true), RootPortVerdict::DecryptedOk, mem).error(),
            Err::TranslationFault);
  // T=1 without a decrypted verdict falls back to the normal table.
  EXPECT_TRUE(smmu.translate_transaction(dma(TxnKind::DmaRead, 0x10000, true), RootPortVerdict::PlaintextNormal, mem));
  EXPECT_EQ(smmu.translations().back().table, StreamTable::Normal);
}

TEST_F(SmmuTest, RealmStreamDmaIsGpcCheckedAsRealm) {
  struct Nop final : FlushSink {
    void on_gpt_change(Pa, std::uint64_t) override {}
  } sink;
  ASSERT_TRUE(mem.set_world(Pa{0x2000}, World::Realm, kRoot, sink));
  // Normal stream to realm memory: denied by the GPC.
  ASSERT_TRUE(smmu.s2_write(StreamTable::Normal, kSid, Ipa{0x11000}, Pa{0x2000}, kRoot));
  EXPECT_EQ(smmu.translate_transaction(dma(TxnKind::DmaRead, 0x11000, false), RootPortVerdict::PlaintextNormal, mem).error(),
            Err::GpcDenied);
  StreamTableEntry realm{kSid, true, World::Realm, 1, false, VmId{3}, KeyId{0x103}};
  ASSERT_TRUE(smmu.ste_write(StreamTable::Realm, realm, kRoot));
  ASSERT_TRUE(smmu.s2_write(StreamTable::Realm, kSid, Ipa{0x11000}, Pa{0x2000}, kRoot));
  ASSERT_TRUE(smmu.translate_transaction(dma(TxnKind::DmaWrite, 0x11000, true, {0xaa}), RootPortVerdict::DecryptedOk, mem));
  EXPECT_EQ(mem.granule(Pa{0x2000}).mec_key, KeyId{0x103});
}

TEST_F(SmmuTest, TlbFillsAndFlushesOnGptChange) {
  ASSERT_TRUE(smmu.translate_transaction(dma(TxnKind::DmaRead, 0x10000, false), RootPortVerdict::PlaintextNormal, mem));
  EXPECT_EQ(smmu.tlb().size(), 1u);
  ASSERT_TRUE(smmu.translate_transaction(dma(TxnKind::DmaRead, 0x10000, false), RootPortVerdict::PlaintextNormal, mem));
  EXPECT_TRUE(smmu.translations().back().tlb_hit);
  ASSERT_TRUE(mem.set_world(Pa{0x1000}, World::Realm, kRoot, smmu));
  EXPECT_EQ(smmu.tlb().size(), 0u);
  EXPECT_EQ(smmu.last_flush_generation(), mem.generation());
}

TEST_F(SmmuTest, TableChangesInvalidateCachedEntries) {
  ASSERT_TRUE(smmu.translate_transaction(dma(TxnKind::DmaRead, 0x10000, false), RootPortVerdict::PlaintextNormal, mem));
  ASSERT_TRUE(smmu.s2_write(StreamTable::Normal, kSid, Ipa{0x10000}, Pa{0x3000}, kRoot));
  ASSERT_TRUE(smmu.translate_transaction(dma(TxnKind::DmaRead, 0x10000, false), RootPortVerdict::PlaintextNormal, mem));
  EXPECT_FALSE(smmu.translations().back().tlb_hit);
  EXPECT_EQ(smmu.translations().back().used, Pa{0x3000});
  ASSERT_TRUE(smmu.s2_remove(StreamTable::Normal, kSid, Ipa{0x10000}, kRoot));
  EXPECT_EQ(smmu.translate_transaction(dma(TxnKind::DmaRead, 0x10000, false), RootPortVerdict::PlaintextNormal, mem).error(),
            Err::TranslationFault);
}

TEST_F(SmmuTest, InvalidatedSteStopsTraffic) {
  ASSERT_TRUE(smmu.ste_invalidate(StreamTable::Normal, kSid, kRoot));
  EXPECT_EQ(smmu.translate_transaction(dma(TxnKind::DmaRead, 0x10000, false), RootPortVerdict::PlaintextNormal, mem).error(),
            Err::NoSte);
}

}  // namespace
}  // namespace acai
