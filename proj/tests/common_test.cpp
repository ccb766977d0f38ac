#include <gtest/gtest.h>

#include "acai/common.hpp"

namespace acai {
namespace {

TEST(Hex, RoundTrip) {
  Bytes b{0x00, 0x01, 0xab, 0xff};
  EXPECT_EQ(to_hex(b), "0001abff");
  EXPECT_EQ(from_hex("0001ABff"), b);
  EXPECT_FALSE(from_hex("abc").has_value());
  EXPECT_FALSE(from_hex("zz").has_value());
}

// FIPS 180-2 appendix B.1 test vector.
TEST(Sha256, KnownVector) {
  EXPECT_EQ(to_hex(sha256(std::string_view("abc"))),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(ByteWriter, LittleEndianFixedWidth) {
  ByteWriter w;
  w.u16(0x0102);
  w.u32(0x03040506);
  w.boolean(true);
  w.str("ab");
  EXPECT_EQ(to_hex(w.data()), "0201060504030102000000" "6162");
}

TEST(Page, ZeroUntilWritten) {
  Page p;
  EXPECT_TRUE(p.is_zero());
  EXPECT_EQ(p.read(10, 3), (Bytes{0, 0, 0}));
  Bytes zeros(kGranuleSize, 0);
  EXPECT_EQ(p.digest(), sha256(zeros));
}

TEST(Page, CopyOnWrite) {
  Page a;
  a.write(0, Bytes{1, 2, 3});
  Page b = a;
  b.write(1, Bytes{9});
  EXPECT_EQ(a.read(0, 3), (Bytes{1, 2, 3}));
  EXPECT_EQ(b.read(0, 3), (Bytes{1, 9, 3}));
  EXPECT_FALSE(a == b);
}

TEST(Page, DigestTracksContents) {
  Page a;
  a.write(5, Bytes{7});
  Bytes expect(kGranuleSize, 0);
  expect[5] = 7;
  EXPECT_EQ(a.digest(), sha256(expect));
}

TEST(Keystream, InvolutionAndNeverIdentity) {
  Bytes plain(4096);
  for (std::size_t i = 0; i < plain.size(); ++i) plain[i] = static_cast<std::uint8_t>(i * 31);
  for (std::uint64_t key : {1ULL, 2ULL, 0x1234ULL}) {
    Bytes sealed = keystream_xor(plain, key, 0x40);
    ASSERT_EQ(sealed.size(), plain.size());
    for (std::size_t i = 0; i < plain.size(); ++i) ASSERT_NE(sealed[i], plain[i]) << "key " << key << " byte " << i;
    EXPECT_EQ(keystream_xor(sealed, key, 0x40), plain);
  }
  EXPECT_NE(keystream_xor(plain, 1, 0), keystream_xor(plain, 2, 0));
}

TEST(Errors, NamesRoundTrip) {
  for (int i = 0; i <= static_cast<int>(Err::InvalidArgument); ++i) {
    auto e = static_cast<Err>(i);
    EXPECT_EQ(parse_err(to_string(e)), e) << to_string(e);
  }
  EXPECT_FALSE(parse_err("NoSuchError").has_value());
}

TEST(Worlds, NamesRoundTrip) {
  for (World w : {World::Normal, World::Secure, World::Realm, World::Root}) EXPECT_EQ(parse_world(to_string(w)), w);
}

}  // namespace
}  // namespace acai
