#include "acai/world_memory.hpp"

namespace acai {

WorldMemory::WorldMemory(std::size_t granule_count)
    : gpt_(granule_count, World::Normal), granules_(granule_count) {}

std::optional<Err> WorldMemory::check_range(Pa addr, std::size_t len) const {
  if (!in_range(addr)) return Err::OutOfRange;
  auto offset = addr.value % kGranuleSize;
  if (offset + len > kGranuleSize) return Err::OutOfRange;
  return std::nullopt;
}

Status WorldMemory::set_world(Pa pa, World world, const AccessorCtx& caller, FlushSink& sink) {
  if (caller.world != World::Root) return Err::NotRoot;
  if (!in_range(pa) || !granule_aligned(pa.value)) return Err::OutOfRange;
  auto idx = pa.value / kGranuleSize;
  World from = gpt_[idx];
  if (from == world) return ok_status();
  gpt_[idx] = world;
  ++generation_;
  changes_.push_back({pa, from, world, generation_, granules_[idx].contents.is_zero()});
  sink.on_gpt_change(pa, generation_);
  return ok_status();
}

Access WorldMemory::gpc_check(const AccessorCtx& accessor, Pa pa) const {
  return gpc_matrix(accessor.world, world_of(Pa{granule_base(pa.value)}));
}

Result<Bytes> WorldMemory::read(const AccessorCtx& accessor, Pa addr, std::size_t len) {
  if (auto e = check_range(addr, len)) return *e;
  auto idx = addr.value / kGranuleSize;
  World target = gpt_[idx];
  bool allowed = gpc_check(accessor, addr) == Access::Allow;
  if (!allowed) {
    accesses_.push_back({accessor.kind, accessor.world, target, addr, AccessOp::Read, false, false, false});
    return Err::GpcDenied;
  }
  const Granule& g = granules_[idx];
  Bytes plain = g.contents.read(addr.value % kGranuleSize, len);
  bool mismatch = g.mec_key.has_value() && accessor.mec_key != g.mec_key;
  Bytes out = mismatch ? keystream_xor(plain, g.mec_key->value, addr.value) : plain;
  bool leaked = mismatch && !out.empty() && out == plain;
  accesses_.push_back({accessor.kind, accessor.world, target, addr, AccessOp::Read, true, mismatch, leaked});
  return out;
}

Status WorldMemory::write(const AccessorCtx& accessor, Pa addr, std::span<const std::uint8_t> data) {
  if (auto e = check_range(addr, data.size())) return *e;
  auto idx = addr.value / kGranuleSize;
  World target = gpt_[idx];
  if (gpc_check(accessor, addr) != Access::Allow) {
    accesses_.push_back({accessor.kind, accessor.world, target, addr, AccessOp::Write, false, false, false});
    return Err::GpcDenied;
  }
  Granule& g = granules_[idx];
  // A write under a different key re-encrypts the whole granule: bytes that
  // were stored under the old key become unreadable garbage to the new owner.
  std::optional<KeyId> key = target == World::Realm ? accessor.mec_key : std::nullopt;
  if (g.mec_key != key && !g.contents.is_zero()) {
    Bytes whole = g.contents.read(0, kGranuleSize);
    if (g.mec_key) whole = keystream_xor(whole, g.mec_key->value, addr.value - addr.value % kGranuleSize);
    g.contents.assign(whole);
  }
  g.contents.write(addr.value % kGranuleSize, data);
  g.mec_key = key;
  accesses_.push_back({accessor.kind, accessor.world, target, addr, AccessOp::Write, true, false, false});
  return ok_status();
}

Status WorldMemory::scrub(Pa pa, const AccessorCtx& caller) {
  if (caller.world != World::Root) return Err::NotRoot;
  if (!in_range(pa)) return Err::OutOfRange;
  Granule& g = granules_[pa.value / kGranuleSize];
  g.contents.clear();
  g.mec_key.reset();
  return ok_status();
}

void WorldMemory::encode(ByteWriter& w) const {
  w.u64(generation_);
  w.u32(static_cast<std::uint32_t>(gpt_.size()));
  for (std::size_t i = 0; i < gpt_.size(); ++i) {
    w.u8(static_cast<std::uint8_t>(gpt_[i]));
    w.boolean(granules_[i].mec_key.has_value());
    w.u64(granules_[i].mec_key ? granules_[i].mec_key->value : 0);
    w.boolean(granules_[i].contents.is_zero());
    if (!granules_[i].contents.is_zero()) w.digest(granules_[i].contents.digest());
  }
}

}  // namespace acai
