#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "acai/common.hpp"
#include "acai/pcie_types.hpp"
#include "acai/world_memory.hpp"

namespace acai {

inline constexpr std::size_t kMaxBars = 6;
inline constexpr std::size_t kDeviceMemPages = 16;

enum class DeviceKind : std::uint8_t {
  Genuine,   // real hardware holding a manufacturer identity
  Emulated,  // presented by software; cannot sign attestation evidence
};

/// What is physically (or virtually) present at a bus address.
struct DeviceSpec {
  BusAddr bus;
  DeviceKind kind = DeviceKind::Genuine;
  std::vector<std::uint32_t> bar_granules;  // size of each BAR in granules
  std::string firmware = "fw-1.0";
  bool debug_disabled = true;
  std::uint64_t serial = 0;  // hardware identity
  friend bool operator==(const DeviceSpec&, const DeviceSpec&) = default;
};

struct DeviceModel {
  DeviceSpec spec;
  Digest firmware_digest{};
  Page config_space;
  std::vector<Page> local_mem = std::vector<Page>(kDeviceMemPages);
  std::vector<std::vector<Page>> bar_mem;  // one page per BAR granule
  std::optional<KeyId> link_key;
  std::uint64_t tx_counter = 0;   // next upstream IDE sequence number
  std::uint64_t rx_expected = 0;  // next downstream IDE sequence number

  Rid rid() const { return rid_of(spec.bus); }
  bool debug_disabled() const { return spec.debug_disabled; }

  Bytes read_local(std::uint64_t offset, std::size_t len) const;
  void write_local(std::uint64_t offset, std::span<const std::uint8_t> data);
};

/// Signed evidence returned by the device over SPDM.
struct DeviceReport {
  Rid rid;
  std::uint64_t identity = 0;
  Digest firmware_digest{};
  Digest config_digest{};
  bool debug_disabled = true;
  std::uint64_t nonce = 0;
  Digest signature{};
  friend bool operator==(const DeviceReport&, const DeviceReport&) = default;
};

/// Checks a report's signature against the manufacturer trust anchor.
bool verify_device_signature(const DeviceReport& report);

/// Deterministic configuration-space image a device presents after reset.
Bytes config_space_image(Rid rid, std::span<const std::uint32_t> bar_granules, const Digest& firmware);

/// A device-originated request before it is put on the wire.
struct TxnRequest {
  TxnKind kind = TxnKind::DmaRead;
  bool t_bit = true;
  std::uint64_t address = 0;
  std::uint32_t length = 0;
  Bytes payload;
  std::optional<Rid> rid_override;  // forged requester id
};

struct Delivery {
  RootPortVerdict verdict;
  PcieTransaction txn;  // payload is plaintext when the verdict is decrypted-ok
};

struct TapRecord {
  Rid rid;
  bool upstream;
  bool t_bit;
  TxnKind kind;
  std::optional<Envelope> envelope;
  bool plaintext_exposed;  // the wire payload equals the plaintext
};

struct VerdictRecord {
  Rid rid;
  std::optional<KeyId> envelope_key;
  std::optional<KeyId> store_key;
  RootPortVerdict verdict;
};

struct KeyStoreWrite {
  World caller;
  bool committed;
};

class PcieFabric {
 public:
  /// Installs (or swaps in) a device at `spec.bus`, freshly reset.
  DeviceModel& plug(const DeviceSpec& spec);
  void unplug(BusAddr bus) { devices_.erase(bus); }

  const DeviceModel* device(BusAddr bus) const;
  DeviceModel* device(BusAddr bus);
  const std::map<BusAddr, DeviceModel>& devices() const { return devices_; }

  /// Regenerates config space, zeroes device memory and drops the link key.
  Status device_reset(BusAddr bus);

  Status ide_program_key(Rid rid, KeyId key, const AccessorCtx& caller);
  Status ide_erase_key(Rid rid, const AccessorCtx& caller);
  std::optional<KeyId> root_port_key(Rid rid) const;
  const std::map<Rid, KeyId>& key_store() const { return key_store_; }

  /// True when the device at `rid` shares the root port's current key.
  bool link_secure(Rid rid) const;

  /// Device puts a transaction on the link; the root port rules on it.
  Delivery device_send(BusAddr dev, const TxnRequest& req);

  /// Root-port processing of a transaction as it arrives off the wire.
  Delivery root_port_receive(const PcieTransaction& wire);

  /// Host-to-device realm traffic (DMA completions, MMIO). Returns the
  /// payload as the device decrypted it.
  Result<Bytes> host_to_device(Rid rid, TxnKind kind, std::uint64_t address, const Bytes& payload);

  /// Device-to-host completion for an MMIO read.
  Result<Bytes> device_to_host_completion(Rid rid, const Bytes& payload);

  /// SPDM challenge. With `verify` set, evidence that does not carry an
  /// authentic manufacturer signature is rejected.
  Result<DeviceReport> spdm_attest(BusAddr bus, std::uint64_t nonce, bool verify = true) const;

  /// Physical attacker: re-inject the last captured realm envelope.
  std::optional<Delivery> replay_capture();
  const std::optional<PcieTransaction>& capture() const { return capture_; }

  const std::vector<TapRecord>& taps() const { return taps_; }
  const std::vector<VerdictRecord>& verdicts() const { return verdicts_; }
  const std::vector<KeyStoreWrite>& key_writes() const { return key_writes_; }
  void clear_observations() {
    taps_.clear();
    verdicts_.clear();
    key_writes_.clear();
  }

  void encode(ByteWriter& w) const;

 private:
  std::map<BusAddr, DeviceModel> devices_;
  std::map<Rid, KeyId> key_store_;           // root-world only
  std::map<Rid, std::uint64_t> rx_expected_;  // upstream sequence per rid
  std::map<Rid, std::uint64_t> tx_counter_;   // downstream sequence per rid
  std::optional<PcieTransaction> capture_;
  std::vector<TapRecord> taps_;
  std::vector<VerdictRecord> verdicts_;
  std::vector<KeyStoreWrite> key_writes_;
};

}  // namespace acai
