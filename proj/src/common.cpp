#include "acai/common.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cstring>
#include <map>
#include <stdexcept>

namespace acai {

namespace {

constexpr std::array<std::string_view, 4> kWorldNames = {"Normal", "Secure", "Realm", "Root"};

constexpr std::array<std::string_view, 45> kErrNames = {
    "None",
    "NotRoot",
    "OutOfRange",
    "GpcDenied",
    "ResourceExhausted",
    "WrongWorld",
    "StillMapped",
    "DoubleMap",
    "IpaInUse",
    "BarNotMapped",
    "ConfigNotRealm",
    "RealmActive",
    "AttachIncomplete",
    "NotOwner",
    "Unmapped",
    "UnknownVm",
    "NotActive",
    "StreamIdTaken",
    "DeviceNotFound",
    "AttestFailed",
    "VmAlreadyHasDevice",
    "PaOwnedByOtherDevice",
    "RealmStreamDenied",
    "FieldDenied",
    "AtsDenied",
    "DiscardedAtRootPort",
    "NoSte",
    "TranslationFault",
    "RidInUse",
    "NotBarRegion",
    "DiscardedAtDevice",
    "NoDeviceSection",
    "BadSignature",
    "MeasurementMismatch",
    "FirmwareMismatch",
    "DebugEnabled",
    "BarMismatch",
    "BarNotProtected",
    "ChallengeFailed",
    "UnknownScenario",
    "AttackNotBlocked",
    "ParseError",
    "BudgetExceeded",
    "InvalidArgument",
    "",
};

static_assert(static_cast<std::size_t>(Err::InvalidArgument) + 2 == kErrNames.size());

}  // namespace

std::string_view to_string(World w) { return kWorldNames.at(static_cast<std::size_t>(w)); }

std::optional<World> parse_world(std::string_view s) {
  for (std::size_t i = 0; i < kWorldNames.size(); ++i)
    if (kWorldNames[i] == s) return static_cast<World>(i);
  return std::nullopt;
}

std::string_view to_string(Err e) { return kErrNames.at(static_cast<std::size_t>(e)); }

std::optional<Err> parse_err(std::string_view s) {
  for (std::size_t i = 0; i + 1 < kErrNames.size(); ++i)
    if (kErrNames[i] == s) return static_cast<Err>(i);
  return std::nullopt;
}

std::string to_hex(std::span<const std::uint8_t> bytes) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out;
  out.reserve(bytes.size() * 2);
  for (auto b : bytes) {
    out.push_back(kDigits[b >> 4]);
    out.push_back(kDigits[b & 0xf]);
  }
  return out;
}

std::optional<Bytes> from_hex(std::string_view hex) {
  if (hex.starts_with("0x") || hex.starts_with("0X")) hex.remove_prefix(2);
  if (hex.size() % 2 != 0) return std::nullopt;
  auto nibble = [](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    return -1;
  };
  Bytes out(hex.size() / 2);
  for (std::size_t i = 0; i < out.size(); ++i) {
    int hi = nibble(hex[2 * i]);
    int lo = nibble(hex[2 * i + 1]);
    if (hi < 0 || lo < 0) return std::nullopt;
    out[i] = static_cast<std::uint8_t>(hi << 4 | lo);
  }
  return out;
}

Digest sha256(std::span<const std::uint8_t> data) {
  Digest out{};
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), out.data(), &len, EVP_sha256(), nullptr) != 1)
    throw std::runtime_error("EVP_Digest failed");
  return out;
}

Digest sha256(std::string_view text) {
  return sha256(std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

Bytes Page::read(std::size_t offset, std::size_t len) const {
  Bytes out(len, 0);
  if (block_ && offset < size_) {
    auto n = std::min(len, size_ - offset);
    std::memcpy(out.data(), block_->bytes.data() + offset, n);
  }
  return out;
}

void Page::write(std::size_t offset, std::span<const std::uint8_t> data) {
  if (offset + data.size() > size_) throw std::out_of_range("page write past end");
  auto next = std::make_shared<Block>();
  next->bytes = block_ ? block_->bytes : Bytes(size_, 0);
  std::copy(data.begin(), data.end(), next->bytes.begin() + static_cast<std::ptrdiff_t>(offset));
  if (std::all_of(next->bytes.begin(), next->bytes.end(), [](auto b) { return b == 0; })) {
    block_.reset();
    return;
  }
  next->digest = sha256(next->bytes);
  block_ = std::move(next);
}

void Page::assign(std::span<const std::uint8_t> data) {
  Bytes full(size_, 0);
  std::copy_n(data.begin(), std::min(data.size(), size_), full.begin());
  block_.reset();
  write(0, full);
}

const Digest& Page::digest() const {
  if (block_) return block_->digest;
  // Zero pages of the common sizes share one cached digest each.
  static thread_local std::map<std::size_t, Digest> zero_digests;
  auto it = zero_digests.find(size_);
  if (it == zero_digests.end()) it = zero_digests.emplace(size_, sha256(Bytes(size_, 0))).first;
  return it->second;
}

bool operator==(const Page& a, const Page& b) {
  if (a.size_ != b.size_) return false;
  if (a.block_ == b.block_) return true;
  if (!a.block_ || !b.block_) return false;
  return a.block_->bytes == b.block_->bytes;
}

Bytes keystream_xor(std::span<const std::uint8_t> data, std::uint64_t key, std::uint64_t nonce) {
  // splitmix64 stream; each byte mapped into [1, 255].
  std::uint64_t state = key * 0x9e3779b97f4a7c15ULL ^ (nonce + 0x632be59bd9b4e019ULL);
  Bytes out(data.begin(), data.end());
  std::uint64_t word = 0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (i % 8 == 0) {
      state += 0x9e3779b97f4a7c15ULL;
      word = state;
      word = (word ^ (word >> 30)) * 0xbf58476d1ce4e5b9ULL;
      word = (word ^ (word >> 27)) * 0x94d049bb133111ebULL;
      word ^= word >> 31;
    }
    auto ks = static_cast<std::uint8_t>(1 + ((word >> (8 * (i % 8))) & 0xff) % 255);
    out[i] ^= ks;
  }
  return out;
}

}  // namespace acai
