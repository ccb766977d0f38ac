#pragma once

#include <optional>
#include <vector>

#include "acai/common.hpp"

namespace acai {

enum class AccessorKind : std::uint8_t { Core, Smmu, RootPort };
enum class AccessOp : std::uint8_t { Read, Write };
enum class Access : std::uint8_t { Allow, Deny };

/// Identity of whoever touches physical memory: the world bit the GPC sees,
/// plus the memory-encryption context for realm traffic.
struct AccessorCtx {
  AccessorKind kind = AccessorKind::Core;
  World world = World::Normal;
  std::optional<VmId> vmid;
  std::optional<KeyId> mec_key;

  static AccessorCtx monitor() { return {AccessorKind::Core, World::Root, {}, {}}; }
  static AccessorCtx hypervisor() { return {AccessorKind::Core, World::Normal, {}, {}}; }
  static AccessorCtx secure() { return {AccessorKind::Core, World::Secure, {}, {}}; }
  static AccessorCtx realm_core(VmId vm, KeyId key) { return {AccessorKind::Core, World::Realm, vm, key}; }
  static AccessorCtx smmu(World w, std::optional<VmId> vm = {}, std::optional<KeyId> key = {}) {
    return {AccessorKind::Smmu, w, vm, key};
  }
};

/// The granule protection check access matrix.
constexpr Access gpc_matrix(World accessor, World target) {
  switch (accessor) {
    case World::Root:
      return Access::Allow;
    case World::Realm:
      return target == World::Realm || target == World::Normal ? Access::Allow : Access::Deny;
    case World::Secure:
      return target == World::Secure || target == World::Normal ? Access::Allow : Access::Deny;
    case World::Normal:
      return target == World::Normal ? Access::Allow : Access::Deny;
  }
  return Access::Deny;
}

struct Granule {
  Page contents;
  std::optional<KeyId> mec_key;  // set iff realm-encrypted contents
};

struct AccessRecord {
  AccessorKind kind;
  World accessor_world;
  World target_world;
  Pa pa;
  AccessOp op;
  bool allowed;
  bool key_mismatch;      // read with a key other than the one the data was stored under
  bool plaintext_leaked;  // mismatched read returned the stored plaintext
};

struct WorldChange {
  Pa pa;
  World from;
  World to;
  std::uint64_t generation;
  bool contents_zero;
};

/// Receives GPT change notifications; every cache of translations that
/// depends on the world of a PA implements this.
class FlushSink {
 public:
  virtual void on_gpt_change(Pa pa, std::uint64_t generation) = 0;

 protected:
  ~FlushSink() = default;
};

/// Physical memory as granules plus the root-owned granule protection table.
class WorldMemory {
 public:
  explicit WorldMemory(std::size_t granule_count = 256);

  std::size_t granule_count() const { return gpt_.size(); }
  bool in_range(Pa pa) const { return pa.value / kGranuleSize < gpt_.size(); }
  World world_of(Pa pa) const { return gpt_.at(pa.value / kGranuleSize); }
  std::uint64_t generation() const { return generation_; }
  const Granule& granule(Pa pa) const { return granules_.at(pa.value / kGranuleSize); }

  /// Monitor-only GPT update; publishes the change to `sink`.
  Status set_world(Pa pa, World world, const AccessorCtx& caller, FlushSink& sink);

  Access gpc_check(const AccessorCtx& accessor, Pa pa) const;

  /// Reads `len` bytes at `addr`; the range must stay within one granule.
  Result<Bytes> read(const AccessorCtx& accessor, Pa addr, std::size_t len);
  Status write(const AccessorCtx& accessor, Pa addr, std::span<const std::uint8_t> data);

  Status scrub(Pa pa, const AccessorCtx& caller);

  // Per-step observations, drained by the simulation kernel.
  const std::vector<AccessRecord>& accesses() const { return accesses_; }
  const std::vector<WorldChange>& world_changes() const { return changes_; }
  void clear_observations() {
    accesses_.clear();
    changes_.clear();
  }

  void encode(ByteWriter& w) const;

 private:
  std::optional<Err> check_range(Pa addr, std::size_t len) const;

  std::vector<World> gpt_;
  std::vector<Granule> granules_;
  std::uint64_t generation_ = 1;
  std::vector<AccessRecord> accesses_;
  std::vector<WorldChange> changes_;
};

}  // namespace acai
