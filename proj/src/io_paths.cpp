#include "acai/io_paths.hpp"

#include <algorithm>

namespace acai {

namespace {

std::string hex(std::uint64_t v) { return hex_addr(v); }

Err gran_check(std::uint64_t addr, std::size_t len) {
  return addr % kGranuleSize + len > kGranuleSize ? Err::InvalidArgument : Err::None;
}

}  // namespace

Result<Bytes> realm_read(Platform& p, VmId vm, Ipa ipa, std::size_t len) {
  const RealmVm* r = p.rmm_state.find(vm);
  if (r == nullptr) return Err::UnknownVm;
  if (Err e = gran_check(ipa.value, len); e != Err::None) return e;
  auto pa = rmm::core_translate(p, vm, ipa);
  if (!pa) return pa.error();
  return p.mem.read(AccessorCtx::realm_core(vm, r->mec_key), *pa, len);
}

Status realm_write(Platform& p, VmId vm, Ipa ipa, const Bytes& data) {
  const RealmVm* r = p.rmm_state.find(vm);
  if (r == nullptr) return Err::UnknownVm;
  if (Err e = gran_check(ipa.value, data.size()); e != Err::None) return e;
  auto pa = rmm::core_translate(p, vm, ipa);
  if (!pa) return pa.error();
  return p.mem.write(AccessorCtx::realm_core(vm, r->mec_key), *pa, data);
}

Result<Bytes> physical_read(Platform& p, const AccessorCtx& who, Pa pa, std::size_t len) {
  auto out = p.mem.read(who, pa, len);
  if (out.error() == Err::GpcDenied) p.log("monitor", "gpc_fault", {{"pa", hex(pa.value)}, {"world", std::string(to_string(who.world))}});
  return out;
}

Status physical_write(Platform& p, const AccessorCtx& who, Pa pa, const Bytes& data) {
  auto st = p.mem.write(who, pa, data);
  if (st.error() == Err::GpcDenied) p.log("monitor", "gpc_fault", {{"pa", hex(pa.value)}, {"world", std::string(to_string(who.world))}});
  return st;
}

Result<Bytes> mmio_access(Platform& p, VmId vm, Ipa ipa, AccessOp op, const Bytes& data, std::size_t len) {
  const RealmVm* r = p.rmm_state.find(vm);
  if (r == nullptr) return Err::UnknownVm;
  std::size_t n = op == AccessOp::Write ? data.size() : len;
  if (Err e = gran_check(ipa.value, n); e != Err::None) return e;
  auto pa = rmm::core_translate(p, vm, ipa);
  if (!pa) return Err::TranslationFault;
  AccessorCtx core = AccessorCtx::realm_core(vm, r->mec_key);
  if (p.mem.gpc_check(core, *pa) != Access::Allow) {
    p.log("monitor", "gpc_fault", {{"pa", hex(pa->value)}, {"world", "Realm"}});
    return Err::GpcDenied;
  }
  if (!r->attached_device) return Err::NotBarRegion;
  std::size_t bar = 0;
  for (; bar < r->bars.size(); ++bar) {
    const auto& b = r->bars[bar];
    if (ipa.value >= b.ipa.value && ipa.value < b.ipa.value + b.size) break;
  }
  if (bar == r->bars.size()) return Err::NotBarRegion;
  BusAddr bus = bus_of(*r->attached_device);
  Rid rid = rid_of(bus);
  std::uint64_t offset = ipa.value - r->bars[bar].ipa.value;
  DeviceModel* dev = p.fabric.device(bus);
  if (dev == nullptr) return Err::DeviceNotFound;

  // The device decodes the BAR offset against its own layout.
  auto fits = [&](const DeviceModel& d) {
    return bar < d.bar_mem.size() && offset / kGranuleSize < d.bar_mem[bar].size();
  };
  if (op == AccessOp::Write) {
    auto delivered = p.fabric.host_to_device(rid, TxnKind::MmioWrite, offset, data);
    p.log("device", "mmio_write", {{"bus", hex(bus.value)}, {"bar", std::to_string(bar)}, {"offset", hex(offset)}},
          delivered.error());
    if (!delivered) return delivered.error();
    dev = p.fabric.device(bus);
    if (!fits(*dev)) return Err::NotBarRegion;
    dev->bar_mem[bar][offset / kGranuleSize].write(offset % kGranuleSize, *delivered);
    return Bytes{};
  }
  auto request = p.fabric.host_to_device(rid, TxnKind::MmioRead, offset, {});
  p.log("device", "mmio_read", {{"bus", hex(bus.value)}, {"bar", std::to_string(bar)}, {"offset", hex(offset)}},
        request.error());
  if (!request) return request.error();
  dev = p.fabric.device(bus);
  if (!fits(*dev)) return Err::NotBarRegion;
  Bytes value = dev->bar_mem[bar][offset / kGranuleSize].read(offset % kGranuleSize, len);
  return p.fabric.device_to_host_completion(rid, value);
}

Result<Bytes> device_dma(Platform& p, BusAddr bus, const DmaRequest& req) {
  if (p.fabric.device(bus) == nullptr) return Err::DeviceNotFound;
  if (req.device_offset + req.len > kDeviceMemPages * kGranuleSize) return Err::InvalidArgument;
  Bytes seen;
  std::size_t done = 0;
  while (done < req.len) {
    std::uint64_t addr = req.ipa.value + done;
    std::size_t n = std::min<std::size_t>(req.len - done, kGranuleSize - addr % kGranuleSize);
    DeviceModel* dev = p.fabric.device(bus);
    TxnRequest t;
    t.kind = req.op == AccessOp::Write ? TxnKind::DmaWrite : TxnKind::DmaRead;
    t.t_bit = req.t_bit;
    t.address = addr;
    t.length = static_cast<std::uint32_t>(n);
    t.rid_override = req.rid_override;
    if (req.op == AccessOp::Write) t.payload = dev->read_local(req.device_offset + done, n);
    Delivery d = p.fabric.device_send(bus, t);
    auto moved = p.smmu.translate_transaction(d.txn, d.verdict, p.mem);
    p.log("device", req.op == AccessOp::Write ? "dma_write" : "dma_read",
          {{"rid", hex(d.txn.rid.value)},
           {"t", req.t_bit ? "1" : "0"},
           {"ipa", hex(addr)},
           {"len", std::to_string(n)},
           {"verdict", std::string(to_string(d.verdict))}},
          moved.error());
    if (!moved) return moved.error();
    if (req.op == AccessOp::Read) {
      Bytes landed = *moved;
      if (d.verdict == RootPortVerdict::DecryptedOk) {
        // Read data returns to the device sealed under the same link key.
        auto back = p.fabric.host_to_device(d.txn.rid, TxnKind::Completion, addr, *moved);
        if (!back) return back.error();
        landed = *back;
      }
      p.fabric.device(bus)->write_local(req.device_offset + done, landed);
      seen.insert(seen.end(), landed.begin(), landed.end());
    }
    done += n;
  }
  return seen;
}

bool known_kernel(const std::string& kernel) { return kernel == "negate" || kernel == "copy" || kernel == "increment"; }

Status device_compute(Platform& p, BusAddr bus, const std::string& kernel, Ipa src, Ipa dst, std::size_t len,
                      bool t_bit) {
  if (!known_kernel(kernel)) return Err::InvalidArgument;
  auto in = device_dma(p, bus, DmaRequest{AccessOp::Read, src, len, t_bit, std::nullopt, 0});
  if (!in) return in.error();
  Bytes buf = *in;
  for (auto& b : buf) {
    if (kernel == "negate") b = static_cast<std::uint8_t>(-b);
    else if (kernel == "increment") b = static_cast<std::uint8_t>(b + 1);
  }
  p.fabric.device(bus)->write_local(0, buf);
  p.log("device", "compute", {{"bus", hex(bus.value)}, {"kernel", kernel}, {"len", std::to_string(len)}});
  auto out = device_dma(p, bus, DmaRequest{AccessOp::Write, dst, len, t_bit, std::nullopt, 0});
  return out ? ok_status() : Status(out.error());
}

}  // namespace acai
