#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "acai/common.hpp"
#include "acai/pcie_types.hpp"
#include "acai/translation_cache.hpp"
#include "acai/world_memory.hpp"

namespace acai {

/// The SMMU keeps two stream tables: the hypervisor-requested one for
/// normal-world streams and the monitor-owned realm stream table.
enum class StreamTable : std::uint8_t { Normal, Realm };

struct StreamTableEntry {
  StreamId stream_id;
  bool valid = false;
  World world = World::Normal;
  std::uint64_t stage2_table_id = 0;
  bool ats_enabled = false;
  std::optional<VmId> owner;
  std::optional<KeyId> mec_key;  // memory encryption context of the owner realm
  friend bool operator==(const StreamTableEntry&, const StreamTableEntry&) = default;
};

using Stage2Map = std::map<Ipa, Pa>;

struct TlbKey {
  StreamTable table;
  StreamId sid;
  Ipa ipa;
  friend auto operator<=>(const TlbKey&, const TlbKey&) = default;
};

struct SmmuConfig {
  bool enabled = true;
  bool stage2_enforced = true;
  bool stage2_bypass = false;
  bool ats_enabled = false;
  std::map<std::string, std::uint64_t> fields;  // non-critical fields written on request
  friend bool operator==(const SmmuConfig&, const SmmuConfig&) = default;
};

/// Root-world granules that hold the SMMU data structures.
struct SmmuLayout {
  Pa stream_table;
  Pa stage2_pool;
  Pa queues;
};

struct TranslationRecord {
  StreamTable table;
  StreamId sid;
  Ipa ipa;
  Pa used;
  std::optional<Pa> fresh;  // what a table walk returns at the same step
  bool tlb_hit;
};

struct TableWriteRecord {
  World caller;
  bool committed;
};

class Smmu final : public FlushSink {
 public:
  void set_layout(const SmmuLayout& layout) { layout_ = layout; }
  const std::optional<SmmuLayout>& layout() const { return layout_; }

  Status ste_write(StreamTable table, const StreamTableEntry& ste, const AccessorCtx& caller);
  Status ste_invalidate(StreamTable table, StreamId sid, const AccessorCtx& caller);
  Status s2_write(StreamTable table, StreamId sid, Ipa ipa, Pa pa, const AccessorCtx& caller);
  Status s2_remove(StreamTable table, StreamId sid, Ipa ipa, const AccessorCtx& caller);
  Status s2_clear(StreamTable table, StreamId sid, const AccessorCtx& caller);

  const StreamTableEntry* ste(StreamTable table, StreamId sid) const;
  const Stage2Map* stage2(StreamTable table, StreamId sid) const;
  const std::map<StreamId, Stage2Map>& stage2_tables(StreamTable table) const {
    return tables_[index(table)].stage2;
  }
  const std::map<StreamId, StreamTableEntry>& entries(StreamTable table) const {
    return tables_[index(table)].ste;
  }

  SmmuConfig& config() { return config_; }
  const SmmuConfig& config() const { return config_; }

  /// Drops every cached translation that resolves to `pa`.
  void flush_streams(Pa pa, std::uint64_t generation);
  void flush_stream(StreamTable table, StreamId sid);
  void on_gpt_change(Pa pa, std::uint64_t generation) override { flush_streams(pa, generation); }

  /// Device-originated DMA after the root port has ruled on it. Reads return
  /// the bytes fetched; writes return an empty buffer.
  Result<Bytes> translate_transaction(const PcieTransaction& txn, RootPortVerdict verdict, WorldMemory& mem);

  const TranslationCache<TlbKey>& tlb() const { return tlb_; }
  std::uint64_t last_flush_generation() const { return last_flush_generation_; }

  const std::vector<TranslationRecord>& translations() const { return translations_; }
  const std::vector<TableWriteRecord>& table_writes() const { return table_writes_; }
  void clear_observations() {
    translations_.clear();
    table_writes_.clear();
  }

  void encode(ByteWriter& w) const;

  // Test-only: plant a stage-2 entry without any check, to exercise the
  // invariant checker against a corrupted state.
  void backdoor_map(StreamTable table, StreamId sid, Ipa ipa, Pa pa) { tables_[index(table)].stage2[sid][ipa] = pa; }

 private:
  struct Tables {
    std::map<StreamId, StreamTableEntry> ste;
    std::map<StreamId, Stage2Map> stage2;
  };
  static std::size_t index(StreamTable t) { return static_cast<std::size_t>(t); }
  bool root_write(const AccessorCtx& caller);

  std::optional<SmmuLayout> layout_;
  std::array<Tables, 2> tables_;
  SmmuConfig config_;
  TranslationCache<TlbKey> tlb_;
  std::uint64_t last_flush_generation_ = 0;
  std::vector<TranslationRecord> translations_;
  std::vector<TableWriteRecord> table_writes_;
};

}  // namespace acai
