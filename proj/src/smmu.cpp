#include "acai/smmu.hpp"

namespace acai {

std::string_view to_string(TxnKind k) {
  switch (k) {
    case TxnKind::DmaRead: return "DmaRead";
    case TxnKind::DmaWrite: return "DmaWrite";
    case TxnKind::MmioRead: return "MmioRead";
    case TxnKind::MmioWrite: return "MmioWrite";
    case TxnKind::Completion: return "Completion";
  }
  return "?";
}

std::string_view to_string(RootPortVerdict v) {
  switch (v) {
    case RootPortVerdict::DecryptedOk: return "decrypted-ok";
    case RootPortVerdict::Discard: return "discard";
    case RootPortVerdict::PlaintextNormal: return "plaintext-normal";
  }
  return "?";
}

bool Smmu::root_write(const AccessorCtx& caller) {
  bool ok = caller.world == World::Root;
  table_writes_.push_back({caller.world, ok});
  return ok;
}

Status Smmu::ste_write(StreamTable table, const StreamTableEntry& ste, const AccessorCtx& caller) {
  if (!root_write(caller)) return Err::NotRoot;
  tables_[index(table)].ste[ste.stream_id] = ste;
  flush_stream(table, ste.stream_id);
  return ok_status();
}

Status Smmu::ste_invalidate(StreamTable table, StreamId sid, const AccessorCtx& caller) {
  if (!root_write(caller)) return Err::NotRoot;
  tables_[index(table)].ste.erase(sid);
  flush_stream(table, sid);
  return ok_status();
}

Status Smmu::s2_write(StreamTable table, StreamId sid, Ipa ipa, Pa pa, const AccessorCtx& caller) {
  if (!root_write(caller)) return Err::NotRoot;
  tables_[index(table)].stage2[sid][ipa] = pa;
  tlb_.invalidate(TlbKey{table, sid, ipa});
  return ok_status();
}

Status Smmu::s2_remove(StreamTable table, StreamId sid, Ipa ipa, const AccessorCtx& caller) {
  if (!root_write(caller)) return Err::NotRoot;
  auto& tables = tables_[index(table)].stage2;
  if (auto it = tables.find(sid); it != tables.end()) {
    it->second.erase(ipa);
    if (it->second.empty()) tables.erase(it);
  }
  tlb_.invalidate(TlbKey{table, sid, ipa});
  return ok_status();
}

Status Smmu::s2_clear(StreamTable table, StreamId sid, const AccessorCtx& caller) {
  if (!root_write(caller)) return Err::NotRoot;
  tables_[index(table)].stage2.erase(sid);
  flush_stream(table, sid);
  return ok_status();
}

const StreamTableEntry* Smmu::ste(StreamTable table, StreamId sid) const {
  const auto& m = tables_[index(table)].ste;
  auto it = m.find(sid);
  return it == m.end() ? nullptr : &it->second;
}

const Stage2Map* Smmu::stage2(StreamTable table, StreamId sid) const {
  const auto& m = tables_[index(table)].stage2;
  auto it = m.find(sid);
  return it == m.end() ? nullptr : &it->second;
}

void Smmu::flush_streams(Pa pa, std::uint64_t generation) {
  tlb_.invalidate_pa(pa);
  last_flush_generation_ = generation;
}

void Smmu::flush_stream(StreamTable table, StreamId sid) {
  tlb_.invalidate_if([&](const TlbKey& k, const auto&) { return k.table == table && k.sid == sid; });
}

Result<Bytes> Smmu::translate_transaction(const PcieTransaction& txn, RootPortVerdict verdict, WorldMemory& mem) {
  if (verdict == RootPortVerdict::Discard) return Err::DiscardedAtRootPort;

  // A realm world tag is only ever derived from a successfully decrypted T=1 packet.
  World world_ext = txn.t_bit && verdict == RootPortVerdict::DecryptedOk ? World::Realm : World::Normal;
  StreamTable table = world_ext == World::Realm ? StreamTable::Realm : StreamTable::Normal;
  StreamId sid = stream_of(txn.rid);

  if (layout_) {
    // Stream table lookups are root-world accesses made by the SMMU itself.
    auto probe = mem.read(AccessorCtx::smmu(World::Root), layout_->stream_table, 8);
    if (!probe) return probe.error();
  }
  const StreamTableEntry* entry = ste(table, sid);
  if (entry == nullptr || !entry->valid) return Err::NoSte;

  Ipa page{granule_base(txn.address)};
  std::uint64_t offset = txn.address - page.value;
  TlbKey key{table, sid, page};

  std::optional<Pa> fresh;
  if (const Stage2Map* s2 = stage2(table, sid)) {
    if (auto it = s2->find(page); it != s2->end()) fresh = it->second;
  }
  Pa pa;
  bool hit = false;
  if (auto cached = tlb_.lookup(key)) {
    pa = cached->pa;
    hit = true;
  } else {
    if (!fresh) return Err::TranslationFault;
    pa = *fresh;
    tlb_.insert(key, pa, mem.generation());
  }
  translations_.push_back({table, sid, page, pa, fresh, hit});

  AccessorCtx ctx = AccessorCtx::smmu(world_ext, entry->owner, entry->mec_key);
  Pa target{pa.value + offset};
  if (txn.kind == TxnKind::DmaWrite) {
    auto st = mem.write(ctx, target, txn.payload);
    if (!st) return st.error();
    return Bytes{};
  }
  return mem.read(ctx, target, txn.length);
}

void Smmu::encode(ByteWriter& w) const {
  w.boolean(config_.enabled);
  w.boolean(config_.stage2_enforced);
  w.boolean(config_.stage2_bypass);
  w.boolean(config_.ats_enabled);
  w.u32(static_cast<std::uint32_t>(config_.fields.size()));
  for (const auto& [k, v] : config_.fields) {
    w.str(k);
    w.u64(v);
  }
  for (const auto& t : tables_) {
    w.u32(static_cast<std::uint32_t>(t.ste.size()));
    for (const auto& [sid, e] : t.ste) {
      w.u64(sid.value);
      w.boolean(e.valid);
      w.u8(static_cast<std::uint8_t>(e.world));
      w.u64(e.stage2_table_id);
      w.boolean(e.ats_enabled);
      w.u64(e.owner ? e.owner->value + 1 : 0);
      w.u64(e.mec_key ? e.mec_key->value + 1 : 0);
    }
    w.u32(static_cast<std::uint32_t>(t.stage2.size()));
    for (const auto& [sid, m] : t.stage2) {
      w.u64(sid.value);
      w.u32(static_cast<std::uint32_t>(m.size()));
      for (const auto& [ipa, pa] : m) {
        w.u64(ipa.value);
        w.u64(pa.value);
      }
    }
  }
  w.u32(static_cast<std::uint32_t>(tlb_.size()));
  for (const auto& [k, e] : tlb_.entries()) {
    w.u8(static_cast<std::uint8_t>(k.table));
    w.u64(k.sid.value);
    w.u64(k.ipa.value);
    w.u64(e.pa.value);
  }
}

}  // namespace acai
