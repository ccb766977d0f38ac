#pragma once

#include <optional>
#include <string>

#include "acai/common.hpp"
#include "acai/platform.hpp"

namespace acai {

/// Realm core load/store: IPA resolved through the RMM stage-2 table.
Result<Bytes> realm_read(Platform& p, VmId vm, Ipa ipa, std::size_t len);
Status realm_write(Platform& p, VmId vm, Ipa ipa, const Bytes& data);

/// Core access from a non-realm world directly on a physical address.
Result<Bytes> physical_read(Platform& p, const AccessorCtx& who, Pa pa, std::size_t len);
Status physical_write(Platform& p, const AccessorCtx& who, Pa pa, const Bytes& data);

/// Realm MMIO into its attached device's BAR, carried over IDE.
Result<Bytes> mmio_access(Platform& p, VmId vm, Ipa ipa, AccessOp op, const Bytes& data, std::size_t len);

struct DmaRequest {
  AccessOp op = AccessOp::Read;
  Ipa ipa;
  std::size_t len = 0;
  bool t_bit = true;
  std::optional<Rid> rid_override;
  std::uint64_t device_offset = 0;  // where in device memory the data lands or comes from
};

/// Device-initiated DMA, split per granule. Reads land in device memory and
/// are also returned as the device saw them.
Result<Bytes> device_dma(Platform& p, BusAddr dev, const DmaRequest& req);

/// The device's programmable kernel: DMA `len` bytes in from `src`,
/// transform them in device memory, DMA them out to `dst`.
Status device_compute(Platform& p, BusAddr dev, const std::string& kernel, Ipa src, Ipa dst, std::size_t len,
                      bool t_bit = true);

bool known_kernel(const std::string& kernel);

}  // namespace acai
