// Address-space map and item placement.
//
// Default map (all bounds configurable):
//   mmio          0x0100..0x01FF   out port 0x0180, halt 0x0182, trigger 0x0190
//   dmem          0x0200..0x0FFF   data + main stack (stack grows down from 0x1000)
//   secure shadow 0x2000..0x20FF   shadow stack, 128 word slots
//   monitor state 0x2100..0x2107   table base/count + scan scratch, secure-only
//   monitor rom   0xA000..0xA3FF
//   pmem          0xE000..0xFFDF
//   ivt           0xFFE0..0xFFFF   reset vector at 0xFFFE
#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "eilid/isa.hpp"

namespace eilid {

struct Region {
  uint32_t lo = 0;
  uint32_t hi = 0;  // inclusive
  bool contains(uint32_t a) const { return a >= lo && a <= hi; }
  uint32_t size() const { return hi - lo + 1; }
};

struct MemoryLayout {
  Region mmio{0x0100, 0x01FF};
  Region dmem{0x0200, 0x0FFF};
  Region secure_shadow{0x2000, 0x20FF};
  Region monitor_state{0x2100, 0x2107};
  Region monitor_rom{0xA000, 0xA3FF};
  Region pmem{0xE000, 0xFFDF};
  Region ivt{0xFFE0, 0xFFFF};

  uint16_t out_port = 0x0180;
  uint16_t halt_port = 0x0182;
  uint16_t trigger = 0x0190;
  uint16_t reset_vector = 0xFFFE;

  // Stack band at the top of dmem; initial SP is dmem.hi + 1.
  uint16_t stack_bytes = 0x0200;

  uint16_t stack_top() const { return static_cast<uint16_t>(dmem.hi + 1); }
  bool in_secure(uint32_t a) const {
    return secure_shadow.contains(a) || monitor_state.contains(a);
  }
  bool in_code(uint32_t a) const { return pmem.contains(a) || monitor_rom.contains(a); }
  bool write_protected(uint32_t a) const {
    return pmem.contains(a) || monitor_rom.contains(a) || ivt.contains(a);
  }
  void validate() const;  // throws LayoutError on overlap / bad bounds
};

struct LayoutError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// sizing: 2 bytes + 2 per extension-word operand; jumps are always 2.
int instr_size(const Instruction& in);
int item_size(const AsmItem& item);

struct AddressMap {
  std::vector<uint32_t> addr;  // per item index
  uint32_t text_end = 0;       // first free pmem address
  uint32_t data_end = 0;
  uint32_t monitor_end = 0;
};

AddressMap layout(const AsmProgram& prog, const MemoryLayout& ml);

// ADDRESS<tab>SIZE<tab>SOURCE-LINE, one line per item.
std::string layout_listing(const AsmProgram& prog, const AddressMap& map);

}  // namespace eilid
