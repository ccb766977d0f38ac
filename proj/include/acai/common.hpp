#pragma once

#include <array>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

namespace acai {

inline constexpr std::uint64_t kGranuleSize = 4096;

/// Integer identifier that does not mix with other identifier kinds.
template <class Tag>
struct StrongId {
  std::uint64_t value = 0;

  constexpr StrongId() = default;
  constexpr explicit StrongId(std::uint64_t v) : value(v) {}

  friend constexpr auto operator<=>(StrongId, StrongId) = default;
};

using Pa = StrongId<struct PaTag>;          // host physical address
using Ipa = StrongId<struct IpaTag>;        // guest (intermediate) physical address
using VmId = StrongId<struct VmIdTag>;
using StreamId = StrongId<struct StreamIdTag>;
using Rid = StrongId<struct RidTag>;        // PCIe requester id
using KeyId = StrongId<struct KeyIdTag>;
using BusAddr = StrongId<struct BusAddrTag>;  // packed bus:dev:fn

// Stream and requester ids are both the packed bus address.
constexpr StreamId stream_of(BusAddr b) { return StreamId{b.value}; }
constexpr Rid rid_of(BusAddr b) { return Rid{b.value}; }
constexpr BusAddr bus_of(Rid r) { return BusAddr{r.value}; }
constexpr BusAddr bus_of(StreamId s) { return BusAddr{s.value}; }
constexpr StreamId stream_of(Rid r) { return StreamId{r.value}; }

constexpr bool granule_aligned(std::uint64_t addr) { return addr % kGranuleSize == 0; }
constexpr std::uint64_t granule_base(std::uint64_t addr) { return addr - addr % kGranuleSize; }

enum class World : std::uint8_t { Normal, Secure, Realm, Root };

std::string_view to_string(World w);
std::optional<World> parse_world(std::string_view s);

/// Every error any simulated component can report. Names are part of the
/// script and trace vocabulary, so they are never renamed.
enum class Err : std::uint8_t {
  None,
  // world_memory
  NotRoot,
  OutOfRange,
  GpcDenied,
  // rmm
  ResourceExhausted,
  WrongWorld,
  StillMapped,
  DoubleMap,
  IpaInUse,
  BarNotMapped,
  ConfigNotRealm,
  RealmActive,
  AttachIncomplete,
  NotOwner,
  Unmapped,
  UnknownVm,
  NotActive,
  // monitor
  StreamIdTaken,
  DeviceNotFound,
  AttestFailed,
  VmAlreadyHasDevice,
  PaOwnedByOtherDevice,
  RealmStreamDenied,
  FieldDenied,
  AtsDenied,
  // smmu
  DiscardedAtRootPort,
  NoSte,
  TranslationFault,
  // pcie_fabric
  RidInUse,
  NotBarRegion,
  DiscardedAtDevice,
  // verifier outcomes (verify_report Fail reasons)
  NoDeviceSection,
  BadSignature,
  MeasurementMismatch,
  FirmwareMismatch,
  DebugEnabled,
  BarMismatch,
  BarNotProtected,
  ChallengeFailed,
  // harness
  UnknownScenario,
  AttackNotBlocked,
  ParseError,
  BudgetExceeded,
  InvalidArgument,
};

std::string_view to_string(Err e);
std::optional<Err> parse_err(std::string_view s);

/// Value-or-error return type used by every simulated operation.
template <class T>
class [[nodiscard]] Result {
 public:
  Result(T value) : v_(std::move(value)) {}  // NOLINT(google-explicit-constructor)
  Result(Err e) : v_(e) {}                   // NOLINT(google-explicit-constructor)

  bool ok() const { return v_.index() == 0; }
  explicit operator bool() const { return ok(); }

  T& value() & { return std::get<0>(v_); }
  const T& value() const& { return std::get<0>(v_); }
  T&& value() && { return std::get<0>(std::move(v_)); }
  T& operator*() & { return value(); }
  const T& operator*() const& { return value(); }
  T* operator->() { return &value(); }
  const T* operator->() const { return &value(); }

  Err error() const { return ok() ? Err::None : std::get<1>(v_); }

 private:
  std::variant<T, Err> v_;
};

template <>
class [[nodiscard]] Result<void> {
 public:
  Result() = default;
  Result(Err e) : e_(e) {}  // NOLINT(google-explicit-constructor)

  bool ok() const { return e_ == Err::None; }
  explicit operator bool() const { return ok(); }
  Err error() const { return e_; }

 private:
  Err e_ = Err::None;
};

using Status = Result<void>;

inline Status ok_status() { return {}; }

using Bytes = std::vector<std::uint8_t>;
using Digest = std::array<std::uint8_t, 32>;

std::string to_hex(std::span<const std::uint8_t> bytes);
std::optional<Bytes> from_hex(std::string_view hex);

/// SHA-256 of a byte string.
Digest sha256(std::span<const std::uint8_t> data);
Digest sha256(std::string_view text);

/// Little-endian fixed-width serializer used for measurement entries, the
/// registry word and the canonical state encoding.
class ByteWriter {
 public:
  void u8(std::uint8_t v) { buf_.push_back(v); }
  void u16(std::uint16_t v) { put(v, 2); }
  void u32(std::uint32_t v) { put(v, 4); }
  void u64(std::uint64_t v) { put(v, 8); }
  void boolean(bool b) { u8(b ? 1 : 0); }
  void bytes(std::span<const std::uint8_t> b) { buf_.insert(buf_.end(), b.begin(), b.end()); }
  void digest(const Digest& d) { bytes(d); }
  void str(std::string_view s) {
    u32(static_cast<std::uint32_t>(s.size()));
    buf_.insert(buf_.end(), s.begin(), s.end());
  }

  const Bytes& data() const { return buf_; }
  Bytes take() { return std::move(buf_); }
  void clear() { buf_.clear(); }

 private:
  void put(std::uint64_t v, int width) {
    for (int i = 0; i < width; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  Bytes buf_;
};

/// Copy-on-write byte page. An empty page reads as all zeros; copies share
/// storage until one side writes, which keeps state snapshots cheap.
class Page {
 public:
  explicit Page(std::size_t size = kGranuleSize) : size_(size) {}

  std::size_t size() const { return size_; }
  bool is_zero() const { return !block_; }

  Bytes read(std::size_t offset, std::size_t len) const;
  void write(std::size_t offset, std::span<const std::uint8_t> data);
  void assign(std::span<const std::uint8_t> data);
  void clear() { block_.reset(); }

  /// Digest of the full contents; cached per write.
  const Digest& digest() const;

  friend bool operator==(const Page& a, const Page& b);

 private:
  struct Block {
    Bytes bytes;
    Digest digest{};
  };
  std::shared_ptr<const Block> block_;
  std::size_t size_;
};

/// Symbolic cipher: XOR with a keystream whose bytes are never zero, so a
/// sealed buffer never equals its plaintext at any position.
Bytes keystream_xor(std::span<const std::uint8_t> data, std::uint64_t key, std::uint64_t nonce);

}  // namespace acai
