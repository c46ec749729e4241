// Scripted adversarial runs: memory corruptions and interrupt injections with
// a declared expected outcome.
//
// Scenario text, one directive per line, '#' comments:
//   target <name>
//   at step=<n> write addr=<hex|sym+off> value=<hex|sym+off>
//   at pc=<hex|sym+off> write addr=... value=...
//   at step=<n> irq <id>
//   expect reset=<reason> | expect none | expect hijack=<hex|sym+off>
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "eilid/machine.hpp"

namespace eilid {

struct ScenarioError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Address/value fields keep their symbolic form until executed against a
// concrete image.
struct SymValue {
  std::string symbol;
  int32_t addend = 0;
};

struct ActionWrite {
  bool at_pc = false;
  uint64_t step = 0;
  SymValue pc;
  SymValue addr;
  SymValue value;
};

struct ActionIrq {
  uint64_t step = 0;
  int vector = 0;
};

enum class ExpectKind { Reset, NoViolation, Hijack };

struct AttackScenario {
  std::string name;
  std::string target_image;  // informational id
  std::vector<std::variant<ActionWrite, ActionIrq>> actions;
  ExpectKind expect = ExpectKind::NoViolation;
  ViolationReason expect_reason = ViolationReason::MonitorMismatch;
  SymValue hijack_target;
};

AttackScenario parse_scenario(const std::string& text, const std::string& name = "");

struct ScenarioVerdict {
  bool pass = false;
  std::string details;
  RunResult result;
};

// Runs the image with the scenario's hooks/irqs folded into `schedule`.
// Reset expectations additionally require that no normal-state fetch ever
// lands on a corrupted write's value after the write fired.
ScenarioVerdict execute_scenario(const AttackScenario& scn, const MemoryImage& img,
                                 const std::vector<IrqEvent>& schedule,
                                 uint64_t max_steps = 2'000'000);

}  // namespace eilid
