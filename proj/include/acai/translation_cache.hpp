#pragma once

#include <cstdint>
#include <iterator>
#include <map>
#include <optional>

#include "acai/common.hpp"

namespace acai {

/// Unbounded translation cache. Coherence is kept by invalidation only;
/// each entry remembers the GPT generation it was filled under.
template <class Key>
class TranslationCache {
 public:
  struct Entry {
    Pa pa;
    std::uint64_t generation;
    friend bool operator==(const Entry&, const Entry&) = default;
  };

  std::optional<Entry> lookup(const Key& key) const {
    auto it = entries_.find(key);
    if (it == entries_.end()) return std::nullopt;
    return it->second;
  }

  void insert(const Key& key, Pa pa, std::uint64_t generation) { entries_[key] = Entry{pa, generation}; }

  void invalidate(const Key& key) { entries_.erase(key); }

  template <class Pred>
  std::size_t invalidate_if(Pred pred) {
    std::size_t removed = 0;
    for (auto it = entries_.begin(); it != entries_.end();) {
      if (pred(it->first, it->second)) {
        it = entries_.erase(it);
        ++removed;
      } else {
        ++it;
      }
    }
    return removed;
  }

  void invalidate_pa(Pa pa) {
    invalidate_if([pa](const Key&, const Entry& e) { return e.pa == pa; });
  }

  void clear() { entries_.clear(); }
  std::size_t size() const { return entries_.size(); }
  const std::map<Key, Entry>& entries() const { return entries_; }

  friend bool operator==(const TranslationCache&, const TranslationCache&) = default;

 private:
  std::map<Key, Entry> entries_;
};

}  // namespace acai
