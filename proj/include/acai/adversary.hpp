#pragma once

#include <string>
#include <vector>

#include "acai/platform.hpp"
#include "acai/script.hpp"
#include "acai/simulator.hpp"

namespace acai {

enum class Actor : std::uint8_t { Hypervisor, CoTenantRealm, MaliciousDevice, Physical, SecureWorld, Honest };

std::string_view to_string(Actor a);

/// A single action: exactly one command of the scenario grammar.
struct AdversaryAction {
  Actor actor;
  Command cmd;
};

/// Entity bounds for exhaustive exploration and fuzzing.
struct ExploreConfig {
  std::size_t realms = 2;
  std::size_t devices = 2;
  std::size_t granules = 8;  // allocatable granules; granule 0 is the hypervisor's staging page
  std::size_t ipas = 2;
};

/// Bus address of the i-th explored device.
BusAddr explore_device(std::size_t i);

/// Platform for an exploration: `granules` plus the monitor's reserved ones.
PlatformConfig explore_platform(const ExploreConfig& cfg, const Checks& checks = {});

/// Commands that build the initial state (devices plugged, staging data).
std::vector<Command> explore_setup(const ExploreConfig& cfg);

/// Deterministic, exhaustive list of honest and adversarial actions within bounds.
std::vector<AdversaryAction> action_alphabet(const ExploreConfig& cfg);

struct AttackScenario {
  std::string name;
  Actor actor;
  std::string threat;               // what the attacker tries to achieve
  std::vector<std::string> setup;   // honest preparation, must all succeed
  std::vector<std::string> attack;  // attacker steps
  Err expected;                     // error or verdict that must stop the attack
  std::size_t expected_step;        // index into `attack`
};

const std::vector<AttackScenario>& attack_scenarios();
const AttackScenario* find_scenario(std::string_view name);

struct AttackOutcome {
  bool blocked = false;
  Err blocked_by = Err::None;
  std::optional<std::size_t> at_step;
  bool invariants_held = true;
  std::string message;
  std::vector<TraceEvent> trace;
};

Result<AttackOutcome> run_attack_scenario(std::string_view name, const PlatformConfig& cfg = {});

}  // namespace acai
