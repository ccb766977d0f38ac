#include "acai/platform.hpp"

#include <cstdio>

namespace acai {

void Platform::rollback(const Platform& saved) {
  auto kept = std::move(journal);
  *this = saved;
  journal = std::move(kept);
}

void Platform::clear_observations() {
  mem.clear_observations();
  smmu.clear_observations();
  fabric.clear_observations();
  journal.clear();
}

Digest state_digest(const Platform& p) {
  ByteWriter w;
  p.mem.encode(w);
  p.smmu.encode(w);
  p.fabric.encode(w);
  p.monitor_state.encode(w);
  p.rmm_state.encode(w);
  return sha256(w.data());
}

std::string hex_addr(std::uint64_t v) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "0x%llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace acai
