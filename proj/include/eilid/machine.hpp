// Instruction-level emulator with the secure-state hardware rule set.
//
// Rules checked before any access takes effect:
//   R1  instruction fetch outside pmem/monitor rom
//   R2  data write into pmem, monitor rom, or the ivt
//   R3  data access to secure memory (shadow + monitor state) while normal
//   R4  control transfer into monitor rom anywhere but MON_ENTRY
//   R5  interrupt delivery while secure is deferred, never dropped
//   R6  write to the violation trigger while normal
// A write to the trigger from secure state carries the monitor's reason code
// and resets the device. Violating accesses never mutate state.
#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "eilid/assemble.hpp"

namespace eilid {

// SR bits (r2)
inline constexpr uint16_t kFlagC = 1u << 0;
inline constexpr uint16_t kFlagZ = 1u << 1;
inline constexpr uint16_t kFlagN = 1u << 2;
inline constexpr uint16_t kFlagGie = 1u << 3;
inline constexpr uint16_t kFlagV = 1u << 8;

enum class ViolationReason {
  FetchFromData,
  PmemWrite,
  SecureAccess,
  IllegalEntry,
  MonitorMismatch,
  Overflow,
  Underflow,
  TriggerAbuse,
};

const char* violation_reason_name(ViolationReason r);
std::optional<ViolationReason> violation_reason_from_name(const std::string& s);

// Trigger reason codes written by the generated monitor.
inline constexpr uint16_t kCodeRaMismatch = 1;
inline constexpr uint16_t kCodeIrqMismatch = 2;
inline constexpr uint16_t kCodeIndNotInTable = 3;
inline constexpr uint16_t kCodeOverflow = 4;
inline constexpr uint16_t kCodeUnderflow = 5;
inline constexpr uint16_t kCodeBadSelector = 6;

struct ViolationEvent {
  uint64_t step = 0;
  ViolationReason reason = ViolationReason::FetchFromData;
  uint16_t code = 0;  // trigger code for monitor-raised events
  uint16_t fault_addr = 0;
  uint16_t pc = 0;
  std::string detail;
};

struct IrqEvent {
  int vector = 0;
  uint64_t step = 0;  // earliest delivery boundary
};

struct WriteHook {
  bool at_pc = false;  // false: fire when steps == step
  uint64_t step = 0;
  uint16_t pc = 0;
  uint16_t addr = 0;
  uint16_t value = 0;
  bool fired = false;
};

struct TraceEntry {
  uint64_t step = 0;
  uint16_t pc = 0;
  Mnemonic mnemonic = Mnemonic::Mov;
  bool secure = false;
};

struct DeviceState {
  std::array<uint16_t, 16> regs{};
  std::array<uint8_t, 0x10000> mem{};
  MemoryLayout layout;
  uint16_t mon_entry = 0;  // 0 when the image has no monitor
  bool secure = false;
  bool halted = false;
  std::vector<IrqEvent> pending;
  uint64_t steps = 0;
  uint64_t steps_secure = 0;
  std::vector<uint16_t> outputs;

  uint16_t pc() const { return regs[kRegPc]; }
  uint16_t read_word(uint16_t a) const {
    a &= 0xFFFE;
    return static_cast<uint16_t>(mem[a] | (mem[a + 1] << 8));
  }
};

DeviceState make_state(const MemoryImage& img);

// Zeroes registers and secure memory, reloads PC from the reset vector,
// clears pending interrupts. Step/output history is kept.
void reset(DeviceState& st);

// Executes one instruction (delivering one due interrupt first when legal).
// On violation the state is left untouched and the event returned.
std::optional<ViolationEvent> step(DeviceState& st);

enum class Outcome { CleanHalt, ViolationReset, StepLimit };
const char* outcome_name(Outcome o);

struct RunLimits {
  uint64_t max_steps = 2'000'000;
  bool halt_on_self_jump = true;
  bool resume_after_reset = false;
  bool trace = false;
};

struct RunResult {
  Outcome outcome = Outcome::CleanHalt;
  DeviceState final_state;
  std::vector<ViolationEvent> violations;
  uint64_t executed_total = 0;
  uint64_t executed_normal = 0;
  uint64_t executed_secure = 0;
  std::vector<uint16_t> outputs;
  std::vector<TraceEntry> trace;
};

RunResult run(const MemoryImage& img, const std::vector<IrqEvent>& schedule,
              const std::vector<WriteHook>& hooks, const RunLimits& limits);

// `irq <vector-id> at <step>` per line, '#' comments.
std::vector<IrqEvent> parse_schedule(const std::string& text);

// STEP<tab>PC<tab>MNEMONIC<tab>SECURE-FLAG
std::string format_trace(const std::vector<TraceEntry>& trace);

}  // namespace eilid
