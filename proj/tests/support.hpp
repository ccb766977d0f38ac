#pragma once

#include <gtest/gtest.h>

#include <initializer_list>
#include <string>

#include "acai/simulator.hpp"

namespace acai::testing {

inline Command cmd(const std::string& line) {
  auto c = tokenize(line, 1);
  if (!c) throw std::logic_error("blank command");
  if (auto problem = validate(*c)) throw std::logic_error(line + ": " + *problem);
  return *c;
}

/// Runs each line and requires it to succeed with all invariants holding.
inline void run_ok(Simulator& sim, std::initializer_list<std::string> lines) {
  for (const auto& line : lines) {
    StepOutcome out = sim.step(cmd(line));
    EXPECT_EQ(out.error, Err::None) << line << " -> " << to_string(out.error);
    const Finding* f = sim.last_report().first_failure();
    EXPECT_EQ(f, nullptr) << line << ": " << (f ? f->property + " " + f->witness : "");
  }
}

/// Runs one line and returns its error; invariants must still hold.
inline Err run_err(Simulator& sim, const std::string& line) {
  StepOutcome out = sim.step(cmd(line));
  const Finding* f = sim.last_report().first_failure();
  EXPECT_EQ(f, nullptr) << line << ": " << (f ? f->property + " " + f->witness : "");
  return out.error;
}

/// Realm `name` with one two-BAR device at `dev`, config at 0x1000, data
/// buffers at IPA 0x10000.. backed by 0x2000.., BARs at 0x40000 and 0x42000.
inline void attached_realm(Simulator& sim, const std::string& name = "tenant", const std::string& dev = "0x100",
                           const std::string& plug_flags = "") {
  run_ok(sim, {"plug " + dev + " bars=2,1 serial=7" + plug_flags,
               "mem hv write pa=0x0 data=0102030405060708",
               "delegate 0x1000", "delegate 0x2000", "delegate 0x3000", "delegate 0x4000",
               "delegate 0x5000", "delegate 0x6000", "delegate 0x7000",
               "realm_create " + name,
               "data_create " + name + " src=0x0 dst=0x2000 ipa=0x10000",
               "data_create " + name + " src=0x0 dst=0x3000 ipa=0x11000",
               "data_create " + name + " src=0x0 dst=0x5000 ipa=0x40000",
               "data_create " + name + " src=0x0 dst=0x6000 ipa=0x41000",
               "data_create " + name + " src=0x0 dst=0x7000 ipa=0x42000",
               "data_create " + name + " src=0x0 dst=0x1000 ipa=0x30000 attach_dev dev=" + dev +
                   " bars=0x40000:8192,0x42000:4096"});
}

}  // namespace acai::testing
