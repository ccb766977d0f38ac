#include <gtest/gtest.h>

#include <set>

#include "acai/world_memory.hpp"

namespace acai {
namespace {

struct RecordingSink final : FlushSink {
  std::vector<std::pair<Pa, std::uint64_t>> seen;
  void on_gpt_change(Pa pa, std::uint64_t generation) override { seen.emplace_back(pa, generation); }
};

// The granule protection check, written out as the table of allowed
// (accessor, target) pairs: root sees everything, realm and secure see their
// own world plus normal, normal sees only normal.
TEST(GpcMatrix, ExactTable) {
  const World all[] = {World::Normal, World::Secure, World::Realm, World::Root};
  const std::set<std::pair<World, World>> allowed{
      {World::Root, World::Normal},   {World::Root, World::Secure},   {World::Root, World::Realm},
      {World::Root, World::Root},     {World::Realm, World::Realm},   {World::Realm, World::Normal},
      {World::Secure, World::Secure}, {World::Secure, World::Normal}, {World::Normal, World::Normal},
  };
  for (World a : all)
    for (World t : all)
      EXPECT_EQ(gpc_matrix(a, t) == Access::Allow, allowed.contains({a, t}))
          << to_string(a) << " -> " << to_string(t);
}

TEST(WorldMemory, StartsNormalAndZero) {
  WorldMemory m(4);
  for (std::uint64_t g = 0; g < 4; ++g) {
    EXPECT_EQ(m.world_of(Pa{g * kGranuleSize}), World::Normal);
    EXPECT_EQ(*m.read(AccessorCtx::hypervisor(), Pa{g * kGranuleSize}, 4), Bytes(4, 0));
  }
}

TEST(WorldMemory, OnlyRootChangesWorlds) {
  WorldMemory m(4);
  RecordingSink sink;
  EXPECT_EQ(m.set_world(Pa{0x1000}, World::Realm, AccessorCtx::hypervisor(), sink).error(), Err::NotRoot);
  EXPECT_EQ(m.set_world(Pa{0x1000}, World::Realm, AccessorCtx::realm_core(VmId{1}, KeyId{1}), sink).error(), Err::NotRoot);
  EXPECT_TRUE(sink.seen.empty());
  auto before = m.generation();
  ASSERT_TRUE(m.set_world(Pa{0x1000}, World::Realm, AccessorCtx::monitor(), sink));
  EXPECT_EQ(m.world_of(Pa{0x1000}), World::Realm);
  EXPECT_EQ(m.generation(), before + 1);
  ASSERT_EQ(sink.seen.size(), 1u);
  EXPECT_EQ(sink.seen[0].first, Pa{0x1000});
  EXPECT_EQ(sink.seen[0].second, m.generation());
}

TEST(WorldMemory, SameWorldIsNoChange) {
  WorldMemory m(2);
  RecordingSink sink;
  auto gen = m.generation();
  ASSERT_TRUE(m.set_world(Pa{0}, World::Normal, AccessorCtx::monitor(), sink));
  EXPECT_EQ(m.generation(), gen);
  EXPECT_TRUE(sink.seen.empty());
  EXPECT_TRUE(m.world_changes().empty());
}

TEST(WorldMemory, DeniedAccessesFaultAndAreRecorded) {
  WorldMemory m(4);
  RecordingSink sink;
  ASSERT_TRUE(m.set_world(Pa{0x2000}, World::Realm, AccessorCtx::monitor(), sink));
  EXPECT_EQ(m.read(AccessorCtx::hypervisor(), Pa{0x2000}, 4).error(), Err::GpcDenied);
  EXPECT_EQ(m.write(AccessorCtx::secure(), Pa{0x2010}, Bytes{1}).error(), Err::GpcDenied);
  ASSERT_EQ(m.accesses().size(), 2u);
  EXPECT_FALSE(m.accesses()[0].allowed);
  EXPECT_EQ(m.accesses()[1].target_world, World::Realm);
}

TEST(WorldMemory, RangeMustStayInOneGranule) {
  WorldMemory m(2);
  EXPECT_EQ(m.read(AccessorCtx::hypervisor(), Pa{0x0ffe}, 4).error(), Err::OutOfRange);
  EXPECT_EQ(m.read(AccessorCtx::hypervisor(), Pa{0x2000}, 1).error(), Err::OutOfRange);
}

TEST(WorldMemory, RealmDataIsOpaqueUnderAnotherKey) {
  WorldMemory m(4);
  RecordingSink sink;
  ASSERT_TRUE(m.set_world(Pa{0x1000}, World::Realm, AccessorCtx::monitor(), sink));
  Bytes secret{0x11, 0x22, 0x33, 0x44};
  ASSERT_TRUE(m.write(AccessorCtx::realm_core(VmId{1}, KeyId{0x101}), Pa{0x1000}, secret));
  EXPECT_EQ(*m.read(AccessorCtx::realm_core(VmId{1}, KeyId{0x101}), Pa{0x1000}, 4), secret);

  Bytes other = *m.read(AccessorCtx::realm_core(VmId{2}, KeyId{0x102}), Pa{0x1000}, 4);
  for (std::size_t i = 0; i < secret.size(); ++i) EXPECT_NE(other[i], secret[i]);
  EXPECT_TRUE(m.accesses().back().key_mismatch);
  EXPECT_FALSE(m.accesses().back().plaintext_leaked);

  // The monitor holds no realm key either.
  Bytes root = *m.read(AccessorCtx::monitor(), Pa{0x1000}, 4);
  EXPECT_NE(root, secret);
}

TEST(WorldMemory, ScrubIsRootOnlyAndZeroes) {
  WorldMemory m(2);
  ASSERT_TRUE(m.write(AccessorCtx::hypervisor(), Pa{0x1000}, Bytes{5, 6}));
  EXPECT_EQ(m.scrub(Pa{0x1000}, AccessorCtx::hypervisor()).error(), Err::NotRoot);
  ASSERT_TRUE(m.scrub(Pa{0x1000}, AccessorCtx::monitor()));
  EXPECT_TRUE(m.granule(Pa{0x1000}).contents.is_zero());
  EXPECT_FALSE(m.granule(Pa{0x1000}).mec_key.has_value());
}

TEST(WorldMemory, EncodingCoversWorldAndContents) {
  WorldMemory a(2);
  WorldMemory b(2);
  ByteWriter wa, wb;
  a.encode(wa);
  b.encode(wb);
  EXPECT_EQ(wa.data(), wb.data());
  ASSERT_TRUE(b.write(AccessorCtx::hypervisor(), Pa{0}, Bytes{1}));
  wb.clear();
  b.encode(wb);
  EXPECT_NE(wa.data(), wb.data());
}

}  // namespace
}  // namespace acai
