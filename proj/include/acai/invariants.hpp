#pragma once

#include <string>
#include <vector>

#include "acai/platform.hpp"

namespace acai {

struct Finding {
  std::string property;
  bool pass = true;
  std::string witness;  // minimal facts showing the violation
};

struct InvariantReport {
  std::vector<Finding> findings;

  bool ok() const;
  const Finding* find(std::string_view property) const;
  const Finding* first_failure() const;
  std::vector<std::string> failed() const;
  friend bool operator==(const InvariantReport&, const InvariantReport&);
};

/// Names of every property evaluated, in report order. The first five are
/// the isolation invariants: identity, exclusive ownership, owner binding,
/// 1:1 guest/host pages, no overlapping device memory.
const std::vector<std::string>& property_names();

/// Evaluates the state invariants on `p` and the per-step properties on the
/// observations collected since they were last cleared.
InvariantReport check_invariants(const Platform& p);

}  // namespace acai
