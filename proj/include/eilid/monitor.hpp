// Shadow-stack monitor: generated assembly fragment plus a value-semantics
// oracle used for differential testing.
//
// Shadow index convention: r5 holds the next-free slot ordinal; a store lands
// at base + 2*r5 and increments r5, a check decrements r5 first and compares
// at base + 2*r5. Interrupt contexts occupy two slots (saved PC then saved
// SR) and are checked in reverse order.
#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "eilid/isa.hpp"

namespace eilid {

inline constexpr const char* kMonEntryLabel = "MON_ENTRY";

struct MonitorConfig {
  uint16_t shadow_base = 0x2000;
  uint16_t capacity = 128;  // 16-bit slots
  uint16_t rom_base = 0xA000;
  uint16_t trigger = 0x0190;
  uint16_t state_base = 0x2100;  // table base, table count, scan scratch
  uint16_t table_slots = 16;     // emitted function table size (padded)
  // Selector values loaded into r4 by the instrumentation templates.
  uint16_t sel_store_ra = 1;
  uint16_t sel_check_ra = 2;
  uint16_t sel_store_rai = 3;
  uint16_t sel_check_rai = 4;
  uint16_t sel_store_ind = 5;
  uint16_t sel_check_ind = 6;

  uint16_t table_base_addr() const { return state_base; }
  uint16_t table_count_addr() const { return static_cast<uint16_t>(state_base + 2); }
  uint16_t scan_flag_addr() const { return static_cast<uint16_t>(state_base + 4); }
};

struct MonitorConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Events mirror the six selectors.
struct EvStoreRa { uint16_t ret_addr; };
struct EvCheckRa { uint16_t ret_addr; };
struct EvStoreRai { uint16_t pc; uint16_t sr; };
struct EvCheckRai { uint16_t pc; uint16_t sr; };
struct EvStoreInd { uint16_t table_base; uint16_t count; };
struct EvCheckInd { uint16_t target; };
using MonitorEvent =
    std::variant<EvStoreRa, EvCheckRa, EvStoreRai, EvCheckRai, EvStoreInd, EvCheckInd>;

uint16_t event_selector(const MonitorConfig& cfg, const MonitorEvent& ev);

enum class SlotTag { Free, ReturnAddress, IrqPc, IrqSr };

struct Verdict {
  bool ok = true;
  uint16_t code = 0;  // trigger reason code when !ok
  std::string detail;
  static Verdict pass() { return {}; }
  static Verdict violation(uint16_t code, std::string detail) {
    return {false, code, std::move(detail)};
  }
};

// Oracle for the secure region. `lookup_word` reads program memory for the
// table scan (the table itself lives in immutable pmem).
struct ShadowStackModel {
  MonitorConfig cfg;
  std::vector<uint16_t> slots;
  std::vector<SlotTag> tags;
  uint16_t index = 0;  // r5 mirror
  uint16_t table_base = 0;
  uint16_t table_count = 0;
  uint16_t scan_flag = 0;

  explicit ShadowStackModel(const MonitorConfig& c)
      : cfg(c), slots(c.capacity, 0), tags(c.capacity, SlotTag::Free) {}

  // Secure-region bytes as the generated monitor would leave them.
  std::vector<uint8_t> shadow_bytes() const;
};

using PmemReader = std::function<uint16_t(uint16_t)>;

Verdict oracle_apply(ShadowStackModel& model, const MonitorEvent& ev,
                     const PmemReader& read_pmem);

// Assembly fragment: entry dispatch on r4, S_EILID bodies, shared exit.
// Items carry Origin::Monitor and live in `.section monitor`.
std::vector<AsmItem> generate_monitor(const MonitorConfig& cfg);

}  // namespace eilid
