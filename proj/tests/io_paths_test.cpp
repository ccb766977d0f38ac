#include "support.hpp"

#include "acai/io_paths.hpp"

namespace acai {
namespace {

using testing::attached_realm;
using testing::cmd;
using testing::run_err;
using testing::run_ok;

class IoTest : public ::testing::Test {
 protected:
  void SetUp() override {
    attached_realm(sim);
    run_ok(sim, {"activate tenant", "prot_mem tenant dev=0x100 sg=0x10000:8192"});
  }
  Bytes read(const std::string& line) {
    StepOutcome out = sim.step(cmd(line));
    EXPECT_EQ(out.error, Err::None) << line;
    return out.data;
  }
  Simulator sim;
};

// Oracle for each kernel, computed byte by byte.
Bytes expected_output(const std::string& kernel, Bytes in) {
  for (auto& b : in) {
    if (kernel == "negate") b = static_cast<std::uint8_t>(256 - b);
    if (kernel == "increment") b = static_cast<std::uint8_t>(b + 1);
  }
  return in;
}

TEST_F(IoTest, ComputeKernels) {
  Bytes input{0x00, 0x01, 0x7f, 0x80, 0xff, 0x10};
  run_ok(sim, {"mem tenant write ipa=0x10000 data=" + to_hex(input)});
  for (const char* k : {"negate", "copy", "increment"}) {
    run_ok(sim, {std::string("compute 0x100 kernel=") + k + " src=0x10000 dst=0x11000 len=6"});
    EXPECT_EQ(read("mem tenant read ipa=0x11000 len=6"), expected_output(k, input)) << k;
  }
}

TEST_F(IoTest, DmaRoundTripThroughDeviceMemory) {
  run_ok(sim, {"mem tenant write ipa=0x10000 data=a1a2a3a4"});
  EXPECT_EQ(read("dma 0x100 read ipa=0x10000 len=4"), (Bytes{0xa1, 0xa2, 0xa3, 0xa4}));
  EXPECT_EQ(sim.platform().fabric.device(BusAddr{0x100})->read_local(0, 4), (Bytes{0xa1, 0xa2, 0xa3, 0xa4}));
  run_ok(sim, {"dma 0x100 write ipa=0x11000 len=4"});
  EXPECT_EQ(read("mem tenant read ipa=0x11000 len=4"), (Bytes{0xa1, 0xa2, 0xa3, 0xa4}));
}

TEST_F(IoTest, DmaAcrossGranules) {
  run_ok(sim, {"mem tenant write ipa=0x10ffe data=0102", "mem tenant write ipa=0x11000 data=0304"});
  EXPECT_EQ(read("dma 0x100 read ipa=0x10ffe len=4"), (Bytes{1, 2, 3, 4}));
  int reads = 0;
  for (const auto& e : sim.trace())
    if (e.step == sim.steps() - 1 && e.op == "dma_read") ++reads;
  EXPECT_EQ(reads, 2);
}

TEST_F(IoTest, DmaOutsideProtectedRegionFaults) {
  EXPECT_EQ(run_err(sim, "dma 0x100 read ipa=0x40000 len=4"), Err::TranslationFault);
  // Plaintext (T=0) traffic is routed to the normal table, which is empty.
  EXPECT_EQ(run_err(sim, "dma 0x100 read ipa=0x10000 len=4 t=0"), Err::NoSte);
}

TEST_F(IoTest, DeviceMemoryBounds) {
  EXPECT_EQ(run_err(sim, "dma 0x100 read ipa=0x10000 len=4 off=65534"), Err::InvalidArgument);
  EXPECT_EQ(run_err(sim, "dma 0x999 read ipa=0x10000 len=4"), Err::DeviceNotFound);
}

TEST_F(IoTest, MmioRoundTrip) {
  run_ok(sim, {"mmio tenant write ipa=0x42004 data=cafebabe"});
  EXPECT_EQ(read("mmio tenant read ipa=0x42004 len=4"), (Bytes{0xca, 0xfe, 0xba, 0xbe}));
  EXPECT_EQ(read("mmio tenant read ipa=0x41000"), (Bytes{0, 0, 0, 0}));
  const DeviceModel* d = sim.platform().fabric.device(BusAddr{0x100});
  EXPECT_EQ(d->bar_mem[1][0].read(4, 4), (Bytes{0xca, 0xfe, 0xba, 0xbe}));
}

TEST_F(IoTest, MmioOutsideBars) {
  EXPECT_EQ(run_err(sim, "mmio tenant read ipa=0x10000"), Err::NotBarRegion);
  EXPECT_EQ(run_err(sim, "mmio tenant read ipa=0x50000"), Err::TranslationFault);
  EXPECT_EQ(run_err(sim, "mmio tenant read ipa=0x42ffe len=4"), Err::InvalidArgument);
}

TEST_F(IoTest, MmioToSwappedDeviceIsDropped) {
  run_ok(sim, {"plug 0x100 bars=2,1 serial=99"});
  EXPECT_EQ(run_err(sim, "mmio tenant write ipa=0x40000 data=01"), Err::DiscardedAtDevice);
}

TEST_F(IoTest, PhysicalAccessFaultsAreLogged) {
  EXPECT_EQ(run_err(sim, "mem hv read pa=0x2000 len=4"), Err::GpcDenied);
  bool fault = false;
  for (const auto& e : sim.trace())
    if (e.step == sim.steps() - 1 && e.op == "gpc_fault") fault = true;
  EXPECT_TRUE(fault);
  EXPECT_EQ(run_err(sim, "mem secure write pa=0x2000 data=00"), Err::GpcDenied);
  // The monitor can touch it but sees only ciphertext.
  StepOutcome raw = sim.step(cmd("mem monitor read pa=0x2000 len=8"));
  ASSERT_EQ(raw.error, Err::None);
  EXPECT_NE(raw.data, (Bytes{1, 2, 3, 4, 5, 6, 7, 8}));
}

TEST_F(IoTest, RealmAccessStaysInOneGranule) {
  EXPECT_EQ(run_err(sim, "mem tenant read ipa=0x10ffe len=4"), Err::InvalidArgument);
  EXPECT_EQ(run_err(sim, "mem nobody read ipa=0x10000 len=4"), Err::UnknownVm);
}

TEST(Kernels, Known) {
  EXPECT_TRUE(known_kernel("negate"));
  EXPECT_TRUE(known_kernel("copy"));
  EXPECT_TRUE(known_kernel("increment"));
  EXPECT_FALSE(known_kernel("sort"));
}

}  // namespace
}  // namespace acai
