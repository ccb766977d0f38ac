#include "acai/pcie_fabric.hpp"

#include <algorithm>

namespace acai {

namespace {

// Manufacturer root of trust shared by genuine silicon and the verifier.
constexpr std::string_view kVendorRoot = "acai-sim vendor root of trust";

Digest sign_report(std::string_view secret, const DeviceReport& r) {
  ByteWriter w;
  w.str(secret);
  w.u64(r.identity);
  w.u64(r.rid.value);
  w.digest(r.firmware_digest);
  w.digest(r.config_digest);
  w.boolean(r.debug_disabled);
  w.u64(r.nonce);
  return sha256(w.data());
}

std::uint64_t key_value(const std::optional<KeyId>& k) { return k ? k->value : 0; }

}  // namespace

bool verify_device_signature(const DeviceReport& report) {
  return sign_report(kVendorRoot, report) == report.signature;
}

Bytes config_space_image(Rid rid, std::span<const std::uint32_t> bar_granules, const Digest& firmware) {
  ByteWriter w;
  w.u16(0x13b5);  // vendor id
  w.u16(static_cast<std::uint16_t>(rid.value));
  w.u8(static_cast<std::uint8_t>(bar_granules.size()));
  for (auto g : bar_granules) w.u64(static_cast<std::uint64_t>(g) * kGranuleSize);
  w.digest(firmware);
  return w.take();
}

Bytes DeviceModel::read_local(std::uint64_t offset, std::size_t len) const {
  Bytes out;
  out.reserve(len);
  while (len > 0) {
    auto page = offset / kGranuleSize;
    auto in = offset % kGranuleSize;
    auto n = std::min<std::size_t>(len, kGranuleSize - in);
    Bytes chunk = page < local_mem.size() ? local_mem[page].read(in, n) : Bytes(n, 0);
    out.insert(out.end(), chunk.begin(), chunk.end());
    offset += n;
    len -= n;
  }
  return out;
}

void DeviceModel::write_local(std::uint64_t offset, std::span<const std::uint8_t> data) {
  while (!data.empty()) {
    auto page = offset / kGranuleSize;
    auto in = offset % kGranuleSize;
    auto n = std::min<std::size_t>(data.size(), kGranuleSize - in);
    if (page < local_mem.size()) local_mem[page].write(in, data.first(n));
    offset += n;
    data = data.subspan(n);
  }
}

DeviceModel& PcieFabric::plug(const DeviceSpec& spec) {
  DeviceModel dev;
  dev.spec = spec;
  dev.spec.bar_granules.resize(std::min(spec.bar_granules.size(), kMaxBars));
  dev.firmware_digest = sha256(spec.firmware);
  auto& slot = devices_[spec.bus];
  slot = std::move(dev);
  (void)device_reset(spec.bus);
  return slot;
}

const DeviceModel* PcieFabric::device(BusAddr bus) const {
  auto it = devices_.find(bus);
  return it == devices_.end() ? nullptr : &it->second;
}

DeviceModel* PcieFabric::device(BusAddr bus) {
  auto it = devices_.find(bus);
  return it == devices_.end() ? nullptr : &it->second;
}

Status PcieFabric::device_reset(BusAddr bus) {
  DeviceModel* dev = device(bus);
  if (dev == nullptr) return Err::DeviceNotFound;
  dev->config_space.assign(config_space_image(dev->rid(), dev->spec.bar_granules, dev->firmware_digest));
  for (auto& p : dev->local_mem) p.clear();
  dev->bar_mem.assign(dev->spec.bar_granules.size(), {});
  for (std::size_t i = 0; i < dev->bar_mem.size(); ++i) dev->bar_mem[i].resize(dev->spec.bar_granules[i]);
  dev->link_key.reset();
  dev->tx_counter = 0;
  dev->rx_expected = 0;
  return ok_status();
}

Status PcieFabric::ide_program_key(Rid rid, KeyId key, const AccessorCtx& caller) {
  if (caller.world != World::Root) {
    key_writes_.push_back({caller.world, false});
    return Err::NotRoot;
  }
  if (key_store_.contains(rid)) {
    key_writes_.push_back({caller.world, false});
    return Err::RidInUse;
  }
  key_writes_.push_back({caller.world, true});
  key_store_[rid] = key;
  rx_expected_[rid] = 0;
  tx_counter_[rid] = 0;
  // Key establishment with whatever endpoint currently answers at this rid.
  if (DeviceModel* dev = device(bus_of(rid))) {
    dev->link_key = key;
    dev->tx_counter = 0;
    dev->rx_expected = 0;
  }
  return ok_status();
}

Status PcieFabric::ide_erase_key(Rid rid, const AccessorCtx& caller) {
  if (caller.world != World::Root) {
    key_writes_.push_back({caller.world, false});
    return Err::NotRoot;
  }
  key_writes_.push_back({caller.world, true});
  key_store_.erase(rid);
  rx_expected_.erase(rid);
  tx_counter_.erase(rid);
  return ok_status();
}

std::optional<KeyId> PcieFabric::root_port_key(Rid rid) const {
  auto it = key_store_.find(rid);
  if (it == key_store_.end()) return std::nullopt;
  return it->second;
}

bool PcieFabric::link_secure(Rid rid) const {
  auto key = root_port_key(rid);
  const DeviceModel* dev = device(bus_of(rid));
  return key && dev && dev->link_key == key;
}

Delivery PcieFabric::device_send(BusAddr bus, const TxnRequest& req) {
  DeviceModel* dev = device(bus);
  PcieTransaction wire;
  wire.rid = req.rid_override.value_or(rid_of(bus));
  wire.t_bit = req.t_bit;
  wire.kind = req.kind;
  wire.address = req.address;
  wire.length = req.length;
  if (req.t_bit) {
    Envelope env;
    if (dev && dev->link_key) {
      env.key = dev->link_key;
      env.counter = dev->tx_counter++;
    }
    wire.payload = keystream_xor(req.payload, key_value(env.key), env.counter);
    wire.envelope = env;
    if (env.key) capture_ = wire;
  } else {
    wire.payload = req.payload;
  }
  taps_.push_back({wire.rid, true, wire.t_bit, wire.kind, wire.envelope,
                   wire.t_bit && !req.payload.empty() && wire.payload == req.payload});
  return root_port_receive(wire);
}

Delivery PcieFabric::root_port_receive(const PcieTransaction& wire) {
  if (!wire.t_bit) {
    verdicts_.push_back({wire.rid, std::nullopt, std::nullopt, RootPortVerdict::PlaintextNormal});
    return {RootPortVerdict::PlaintextNormal, wire};
  }
  auto store = root_port_key(wire.rid);
  std::optional<KeyId> env_key = wire.envelope ? wire.envelope->key : std::nullopt;
  bool ok = wire.envelope && env_key && store && *env_key == *store && wire.envelope->integrity_ok &&
            wire.envelope->counter == rx_expected_[wire.rid];
  RootPortVerdict verdict = ok ? RootPortVerdict::DecryptedOk : RootPortVerdict::Discard;
  verdicts_.push_back({wire.rid, env_key, store, verdict});
  Delivery out{verdict, wire};
  if (ok) {
    ++rx_expected_[wire.rid];
    out.txn.payload = keystream_xor(wire.payload, env_key->value, wire.envelope->counter);
  }
  return out;
}

Result<Bytes> PcieFabric::host_to_device(Rid rid, TxnKind kind, std::uint64_t address, const Bytes& payload) {
  auto key = root_port_key(rid);
  if (!key) return Err::DiscardedAtRootPort;  // no IDE stream: realm data never leaves in the clear
  Envelope env{key, tx_counter_[rid]++, true};
  Bytes sealed = keystream_xor(payload, key->value, env.counter);
  taps_.push_back({rid, false, true, kind, env, !payload.empty() && sealed == payload});
  (void)address;
  DeviceModel* dev = device(bus_of(rid));
  if (dev == nullptr || dev->link_key != key || env.counter != dev->rx_expected) return Err::DiscardedAtDevice;
  ++dev->rx_expected;
  return keystream_xor(sealed, key->value, env.counter);
}

Result<Bytes> PcieFabric::device_to_host_completion(Rid rid, const Bytes& payload) {
  TxnRequest req;
  req.kind = TxnKind::Completion;
  req.t_bit = true;
  req.payload = payload;
  Delivery d = device_send(bus_of(rid), req);
  if (d.verdict != RootPortVerdict::DecryptedOk) return Err::DiscardedAtRootPort;
  return d.txn.payload;
}

Result<DeviceReport> PcieFabric::spdm_attest(BusAddr bus, std::uint64_t nonce, bool verify) const {
  const DeviceModel* dev = device(bus);
  if (dev == nullptr) return Err::DeviceNotFound;
  DeviceReport r;
  r.rid = dev->rid();
  r.identity = dev->spec.serial;
  r.firmware_digest = dev->firmware_digest;
  r.config_digest = dev->config_space.digest();
  r.debug_disabled = dev->spec.debug_disabled;
  r.nonce = nonce;
  // Software emulations have no manufacturer key and can only guess.
  r.signature = sign_report(dev->spec.kind == DeviceKind::Genuine ? kVendorRoot : "emulated", r);
  if (verify && !verify_device_signature(r)) return Err::AttestFailed;
  return r;
}

std::optional<Delivery> PcieFabric::replay_capture() {
  if (!capture_) return std::nullopt;
  PcieTransaction wire = *capture_;
  taps_.push_back({wire.rid, true, wire.t_bit, wire.kind, wire.envelope, false});
  return root_port_receive(wire);
}

void PcieFabric::encode(ByteWriter& w) const {
  w.u32(static_cast<std::uint32_t>(devices_.size()));
  for (const auto& [bus, d] : devices_) {
    w.u64(bus.value);
    w.u8(static_cast<std::uint8_t>(d.spec.kind));
    w.u32(static_cast<std::uint32_t>(d.spec.bar_granules.size()));
    for (auto g : d.spec.bar_granules) w.u32(g);
    w.digest(d.firmware_digest);
    w.boolean(d.spec.debug_disabled);
    w.u64(d.spec.serial);
    w.digest(d.config_space.digest());
    for (const auto& p : d.local_mem) {
      w.boolean(p.is_zero());
      if (!p.is_zero()) w.digest(p.digest());
    }
    for (const auto& bar : d.bar_mem)
      for (const auto& p : bar) {
        w.boolean(p.is_zero());
        if (!p.is_zero()) w.digest(p.digest());
      }
    w.u64(key_value(d.link_key));
    w.u64(d.tx_counter);
    w.u64(d.rx_expected);
  }
  w.u32(static_cast<std::uint32_t>(key_store_.size()));
  for (const auto& [rid, key] : key_store_) {
    w.u64(rid.value);
    w.u64(key.value);
  }
  for (const auto* m : {&rx_expected_, &tx_counter_}) {
    w.u32(static_cast<std::uint32_t>(m->size()));
    for (const auto& [rid, c] : *m) {
      w.u64(rid.value);
      w.u64(c);
    }
  }
  w.boolean(capture_.has_value());
  if (capture_) {
    w.u64(capture_->rid.value);
    w.u8(static_cast<std::uint8_t>(capture_->kind));
    w.u64(capture_->address);
    w.u64(key_value(capture_->envelope->key));
    w.u64(capture_->envelope->counter);
    w.digest(sha256(capture_->payload));
  }
}

}  // namespace acai
