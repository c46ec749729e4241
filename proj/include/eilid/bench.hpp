// Overhead benchmark: runs every corpus app with and without instrumentation
// on identical schedules and reports binary-size and executed-instruction
// overhead plus per-event dynamic costs from trace segmentation.
#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "eilid/instrument.hpp"
#include "eilid/machine.hpp"

namespace eilid {

struct BenchError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Addresses of each template block's first instruction -> event name
// (store_ra, check_ra, store_rai, check_rai, store_ind, check_ind).
std::map<uint16_t, std::string> template_block_starts(const AsmProgram& instrumented,
                                                      const AddressMap& map);

// Instruction counts from a template's first instruction through the
// monitor's exit ret, one entry per dynamic event.
std::map<std::string, std::vector<uint64_t>> segment_event_costs(
    const std::vector<TraceEntry>& trace, const std::map<uint16_t, std::string>& starts);

struct AppRow {
  std::string name;
  double instrument_ms = 0.0;  // reported separately, not part of the canonical report
  uint32_t original_bytes = 0;
  uint32_t instrumented_bytes = 0;
  double size_pct = 0.0;
  uint64_t original_steps = 0;
  uint64_t instrumented_steps = 0;
  double time_pct = 0.0;
  int iterations = 0;
  std::map<std::string, uint64_t> event_cost;   // app-invariant constants
  std::map<std::string, uint64_t> event_count;  // interrupt-free run
  bool identity_holds = false;
};

struct OverheadReport {
  std::vector<AppRow> rows;  // ordered by app name
  double avg_size_pct = 0.0;
  double avg_time_pct = 0.0;

  // Deterministic key=value + csv text; excludes wall-clock timing so two
  // runs on identical inputs serialize byte-identically.
  std::string to_text() const;
  std::string timing_text() const;
};

OverheadReport run_bench(const std::string& corpus_dir, const MemoryLayout& ml,
                         const InstrumentOptions& opts);

// Shared pipeline helper: parse + reserved-register rewrite + instrument.
struct BuiltApp {
  AsmProgram original;
  InstrumentResult instrumented;
  MemoryImage original_image;
  MemoryImage instrumented_image;
  std::vector<std::string> rewrite_warnings;
};
BuiltApp build_app(const std::string& source, const MemoryLayout& ml,
                   const InstrumentOptions& opts);

}  // namespace eilid
