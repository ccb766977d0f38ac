#pragma once

#include <optional>

#include "acai/common.hpp"

namespace acai {

enum class TxnKind : std::uint8_t { DmaRead, DmaWrite, MmioRead, MmioWrite, Completion };

std::string_view to_string(TxnKind k);

/// Symbolic IDE protection: which key sealed the payload, the per-direction
/// sequence number, and whether the integrity tag is intact.
struct Envelope {
  std::optional<KeyId> key;
  std::uint64_t counter = 0;
  bool integrity_ok = true;
  friend bool operator==(const Envelope&, const Envelope&) = default;
};

struct PcieTransaction {
  Rid rid;
  bool t_bit = false;
  TxnKind kind = TxnKind::DmaRead;
  std::uint64_t address = 0;  // target IPA inbound, device offset outbound
  std::uint32_t length = 0;   // bytes requested by reads
  Bytes payload;              // as seen on the wire (sealed when t_bit)
  std::optional<Envelope> envelope;
  friend bool operator==(const PcieTransaction&, const PcieTransaction&) = default;
};

enum class RootPortVerdict : std::uint8_t { DecryptedOk, Discard, PlaintextNormal };

std::string_view to_string(RootPortVerdict v);

}  // namespace acai
