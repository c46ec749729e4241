// Call/return/ISR/indirect-call discovery and monitor-invocation rewriting.
//
// Inserted templates (selector in r4, arguments in r6/r7):
//   T1 before each direct call      mov #ret, r6 / mov #1, r4 / call #MON_ENTRY
//   T2 before each ret              mov @r1, r6  / mov #2, r4 / call #MON_ENTRY
//   T3 at each ISR entry            mov 2(r1), r6 / mov @r1, r7 / mov #3, r4 / call #MON_ENTRY
//   T4 before each reti             mov 2(r1), r6 / mov @r1, r7 / mov #4, r4 / call #MON_ENTRY
//   T5 at main entry                mov #table, r6 / mov #slots, r7 / mov #5, r4 / call #MON_ENTRY
//   T6 before each indirect call    mov <target>, r6 / mov #6, r4 / call #MON_ENTRY,
//                                   then a T1-shaped store of the return address
// Return-address immediates are resolved by re-running layout to a fixpoint.
#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "eilid/layout.hpp"
#include "eilid/monitor.hpp"

namespace eilid {

inline constexpr const char* kFunctionTableLabel = "__func_table";
inline constexpr uint16_t kTablePadWord = 0xFFFF;  // never a legal fetch target

enum class SiteKind { Call, IndirectCall, Return, IsrPrologue, IsrEpilogue, MainEntry };
const char* site_kind_name(SiteKind k);

struct InstrumentationSite {
  SiteKind kind = SiteKind::Call;
  size_t item_index = 0;
  uint16_t resolved_ret = 0;  // call sites, filled during the fixpoint
};

struct FunctionTable {
  std::vector<std::string> entries;  // function labels, declaration order
  uint16_t emitted_slots = 0;        // padded size actually emitted
};

struct InstrumentationReport {
  std::map<SiteKind, int> site_counts;
  std::map<SiteKind, int> inserted_instructions;
  int inserted_total = 0;
  int table_words = 0;
  uint32_t original_bytes = 0;      // app pmem footprint before rewriting
  uint32_t instrumented_bytes = 0;  // app pmem footprint after (monitor excluded)
  uint32_t monitor_bytes = 0;
  int iterations = 0;  // layout+patch rounds, final verifying round included

  std::string to_key_value() const;
};

struct InstrumentError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct InstrumentOptions {
  MonitorConfig monitor;
  int fixpoint_cap = 5;
};

std::vector<InstrumentationSite> find_sites(const AsmProgram& prog);

struct RewriteResult {
  AsmProgram program;
  std::vector<std::string> warnings;
};

// Wraps straight-line regions that use r4..r7 with push/pop; rejects values
// that would have to survive a label or control-flow boundary.
RewriteResult rewrite_reserved_registers(const AsmProgram& prog);

// Errors if any r4..r7 use exists at all (the --forbid-reserved-regs mode).
void forbid_reserved_registers(const AsmProgram& prog);

struct InstrumentResult {
  AsmProgram program;  // marker + templates + function table + monitor fragment
  InstrumentationReport report;
  FunctionTable table;
};

InstrumentResult instrument(const AsmProgram& prog, const MemoryLayout& ml,
                            const InstrumentOptions& opts);

// True when every original call/ret/reti is immediately preceded by its
// template block (used by tests and the CLI as a final scan).
bool fully_instrumented(const AsmProgram& prog);

struct StaticOverhead {
  int64_t delta_bytes = 0;
  double delta_pct = 0.0;
  std::map<SiteKind, int> sites;
  std::map<SiteKind, int> inserted;
  std::string to_key_value() const;
};

StaticOverhead static_overhead(const InstrumentationReport& report);

}  // namespace eilid
