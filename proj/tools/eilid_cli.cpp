// eilid command line: instrument / build / run / attack / bench.
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "eilid/attack.hpp"
#include "eilid/bench.hpp"
#include "eilid/instrument.hpp"

namespace {

// exit codes: 0 ok/clean-halt, 1 error, 2 violation, 3 step-limit, 4 scenario fail
constexpr int kExitOk = 0;
constexpr int kExitError = 1;
constexpr int kExitViolation = 2;
constexpr int kExitStepLimit = 3;
constexpr int kExitScenarioFail = 4;

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
}

struct LayoutFlags {
  uint32_t shadow_base = 0x2000;
  uint32_t shadow_slots = 128;
  uint32_t rom_base = 0xA000;

  void attach(CLI::App* app) {
    app->add_option("--shadow-base", shadow_base, "shadow stack base address");
    app->add_option("--shadow-slots", shadow_slots, "shadow stack capacity in 16-bit slots");
    app->add_option("--rom-base", rom_base, "monitor rom base address");
  }

  void apply(eilid::MemoryLayout& ml, eilid::MonitorConfig& cfg) const {
    cfg.shadow_base = static_cast<uint16_t>(shadow_base);
    cfg.capacity = static_cast<uint16_t>(shadow_slots);
    cfg.rom_base = static_cast<uint16_t>(rom_base);
    ml.secure_shadow = {shadow_base, shadow_base + 2 * shadow_slots - 1};
    ml.monitor_state = {shadow_base + 2 * shadow_slots, shadow_base + 2 * shadow_slots + 7};
    cfg.state_base = static_cast<uint16_t>(shadow_base + 2 * shadow_slots);
    uint32_t rom_size = ml.monitor_rom.size();
    ml.monitor_rom = {rom_base, rom_base + rom_size - 1};
    ml.validate();
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"shadow-stack CFI toolchain for an MSP430-class core"};
  app.require_subcommand(1);
  LayoutFlags lf;

  // instrument
  auto* c_inst = app.add_subcommand("instrument", "rewrite an assembly file with CFI templates");
  std::string in_path, out_path, report_path;
  bool forbid_reserved = false;
  c_inst->add_option("input", in_path, "input .s file")->required();
  c_inst->add_option("-o,--output", out_path, "instrumented .s output")->required();
  c_inst->add_option("--report", report_path, "instrumentation report (key=value)");
  c_inst->add_flag("--forbid-reserved-regs", forbid_reserved,
                   "error out on any r4-r7 use instead of rewriting");
  lf.attach(c_inst);

  // build
  auto* c_build = app.add_subcommand("build", "assemble a .s file into a memory image");
  std::string b_in, b_out, b_listing;
  c_build->add_option("input", b_in, "input .s file")->required();
  c_build->add_option("-o,--output", b_out, "image output (.bin, sidecar .sym)")->required();
  c_build->add_option("--listing", b_listing, "write ADDR/SIZE/SOURCE listing");
  lf.attach(c_build);

  // run
  auto* c_run = app.add_subcommand("run", "execute a memory image");
  std::string r_img, r_sched;
  bool r_trace = false;
  uint64_t r_max_steps = 2'000'000;
  c_run->add_option("image", r_img, "image .bin (expects sidecar .sym)")->required();
  c_run->add_option("--schedule", r_sched, "interrupt schedule file");
  c_run->add_flag("--trace", r_trace, "print one line per step");
  c_run->add_option("--max-steps", r_max_steps, "step limit");

  // attack
  auto* c_attack = app.add_subcommand("attack", "execute an attack scenario against an image");
  std::string a_img, a_scn, a_sched;
  c_attack->add_option("image", a_img, "image .bin (expects sidecar .sym)")->required();
  c_attack->add_option("scenario", a_scn, "scenario file")->required();
  c_attack->add_option("--schedule", a_sched, "extra interrupt schedule file");

  // bench
  auto* c_bench = app.add_subcommand("bench", "overhead benchmark over a corpus directory");
  std::string bench_dir, bench_out;
  c_bench->add_option("corpus", bench_dir, "directory with .s apps (+ optional .irq files)")
      ->required();
  c_bench->add_option("-o,--output", bench_out, "report output path")->required();
  lf.attach(c_bench);

  CLI11_PARSE(app, argc, argv);

  try {
    eilid::MemoryLayout ml;
    eilid::InstrumentOptions opts;
    lf.apply(ml, opts.monitor);

    if (*c_inst) {
      auto prog = eilid::parse_asm(read_file(in_path));
      std::vector<std::string> warnings;
      eilid::AsmProgram rewritten;
      if (forbid_reserved) {
        eilid::forbid_reserved_registers(prog);
        rewritten = std::move(prog);
      } else {
        auto rw = eilid::rewrite_reserved_registers(prog);
        warnings = rw.warnings;
        rewritten = std::move(rw.program);
      }
      for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";
      auto res = eilid::instrument(rewritten, ml, opts);
      write_file(out_path, eilid::serialize(res.program));
      if (!report_path.empty()) write_file(report_path, res.report.to_key_value());
      std::cout << "instrumented " << in_path << " -> " << out_path
                << " (iterations=" << res.report.iterations << ")\n";
      return kExitOk;
    }

    if (*c_build) {
      auto prog = eilid::parse_asm(read_file(b_in));
      if (!b_listing.empty()) {
        auto map = eilid::layout(prog, ml);
        write_file(b_listing, eilid::layout_listing(prog, map));
      }
      auto img = eilid::assemble(prog, ml);
      eilid::save_image(img, b_out, b_out + ".sym");
      std::cout << "built " << b_out << " (" << img.symbols.size() << " symbols)\n";
      return kExitOk;
    }

    if (*c_run) {
      auto img = eilid::load_image(r_img, r_img + ".sym");
      std::vector<eilid::IrqEvent> sched;
      if (!r_sched.empty()) sched = eilid::parse_schedule(read_file(r_sched));
      eilid::RunLimits limits;
      limits.max_steps = r_max_steps;
      limits.trace = r_trace;
      auto res = eilid::run(img, sched, {}, limits);
      if (r_trace) std::cout << eilid::format_trace(res.trace);
      std::cout << "outcome=" << eilid::outcome_name(res.outcome) << "\n";
      std::cout << "executed.total=" << res.executed_total << "\n";
      std::cout << "executed.normal=" << res.executed_normal << "\n";
      std::cout << "executed.secure=" << res.executed_secure << "\n";
      std::cout << "outputs=";
      for (size_t i = 0; i < res.outputs.size(); ++i)
        std::cout << (i ? "," : "") << res.outputs[i];
      std::cout << "\n";
      for (const auto& v : res.violations)
        std::cout << "violation=" << eilid::violation_reason_name(v.reason) << " step=" << v.step
                  << " addr=0x" << std::hex << v.fault_addr << " pc=0x" << v.pc << std::dec
                  << " detail=" << v.detail << "\n";
      if (res.outcome == eilid::Outcome::ViolationReset) return kExitViolation;
      if (res.outcome == eilid::Outcome::StepLimit) return kExitStepLimit;
      return kExitOk;
    }

    if (*c_attack) {
      auto img = eilid::load_image(a_img, a_img + ".sym");
      auto scn = eilid::parse_scenario(read_file(a_scn),
                                       std::filesystem::path(a_scn).stem().string());
      std::vector<eilid::IrqEvent> sched;
      if (!a_sched.empty()) sched = eilid::parse_schedule(read_file(a_sched));
      auto verdict = eilid::execute_scenario(scn, img, sched);
      std::cout << (verdict.pass ? "PASS" : "FAIL") << " " << scn.name << ": "
                << verdict.details << "\n";
      return verdict.pass ? kExitOk : kExitScenarioFail;
    }

    if (*c_bench) {
      auto report = eilid::run_bench(bench_dir, ml, opts);
      write_file(bench_out, report.to_text());
      std::cout << report.to_text();
      std::cout << "# wall-clock instrumentation time (not part of the report file)\n"
                << report.timing_text();
      return kExitOk;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitError;
  }
  return kExitError;
}
