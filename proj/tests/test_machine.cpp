#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"
#include "eilid/machine.hpp"
#include "test_util.hpp"

#include <random>

using namespace eilid;

namespace {

MemoryImage image_of(const std::string& text) {
  return assemble(parse_asm(text), MemoryLayout{});
}

// Everything except the step counters.
bool same_state(const DeviceState& a, const DeviceState& b) {
  return a.regs == b.regs && a.mem == b.mem && a.secure == b.secure &&
         a.halted == b.halted && a.outputs == b.outputs;
}

const std::string kBoot = "__boot:\n\tmov #0x1000, r1\n\tjmp main\n";

}  // namespace

TEST_CASE("push pre-decrements sp and stores the word") {
  auto img = image_of("main:\n\tpush r15\n\tjmp $\n");
  DeviceState st = make_state(img);
  st.regs[kRegSp] = 0x0400;
  st.regs[15] = 0xBEEF;
  auto ev = step(st);
  CHECK(!ev);
  CHECK(st.regs[kRegSp] == 0x03FE);
  CHECK(st.read_word(0x03FE) == 0xBEEF);
}

TEST_CASE("fetch from dmem is a violation and mutates nothing") {
  auto img = image_of("main:\n\tjmp $\n");
  DeviceState st = make_state(img);
  st.regs[kRegPc] = 0x0300;
  DeviceState before = st;
  auto ev = step(st);
  REQUIRE(ev.has_value());
  CHECK(ev->reason == ViolationReason::FetchFromData);
  CHECK(ev->fault_addr == 0x0300);
  CHECK(same_state(before, st));
}

TEST_CASE("write into pmem is a violation and mutates nothing") {
  auto img = image_of("main:\n\tmov #1, &0xE000\n\tjmp $\n");
  DeviceState st = make_state(img);
  st.regs[kRegSp] = 0x1000;
  DeviceState before = st;
  auto ev = step(st);
  REQUIRE(ev.has_value());
  CHECK(ev->reason == ViolationReason::PmemWrite);
  CHECK(ev->fault_addr == 0xE000);
  CHECK(same_state(before, st));
}

TEST_CASE("the ivt is write-protected") {
  auto img = image_of("main:\n\tmov #1, &0xFFFE\n\tjmp $\n");
  DeviceState st = make_state(img);
  auto ev = step(st);
  REQUIRE(ev.has_value());
  CHECK(ev->reason == ViolationReason::PmemWrite);
}

TEST_CASE("secure memory is unreachable from normal state, reads and writes") {
  for (const char* body : {"\tmov &0x2000, r15\n", "\tmov #7, &0x2080\n",
                           "\tmov &0x2102, r15\n"}) {
    auto img = image_of("main:\n" + std::string(body) + "\tjmp $\n");
    DeviceState st = make_state(img);
    DeviceState before = st;
    auto ev = step(st);
    REQUIRE(ev.has_value());
    CHECK(ev->reason == ViolationReason::SecureAccess);
    CHECK(same_state(before, st));
  }
}

TEST_CASE("trigger writes from normal state are a violation") {
  auto img = image_of("main:\n\tmov #1, &0x0190\n\tjmp $\n");
  DeviceState st = make_state(img);
  DeviceState before = st;
  auto ev = step(st);
  REQUIRE(ev.has_value());
  CHECK(ev->reason == ViolationReason::TriggerAbuse);
  CHECK(same_state(before, st));
}

TEST_CASE("transfers into the monitor rom anywhere but MON_ENTRY reset") {
  std::string text = kBoot +
                     "main:\n"
                     "\tcall #MON_ENTRY+4\n"
                     "\tjmp $\n"
                     "\t.section monitor\n"
                     "MON_ENTRY:\n"
                     "\tmov r3, r3\n"
                     "\tmov r3, r3\n"
                     "\tmov r3, r3\n"
                     "\tret\n";
  auto img = assemble(parse_asm(text), MemoryLayout{});
  RunResult res = run(img, {}, {}, RunLimits{});
  REQUIRE(res.violations.size() == 1);
  CHECK(res.violations[0].reason == ViolationReason::IllegalEntry);
  CHECK(res.violations[0].fault_addr == img.symbols.at("MON_ENTRY") + 4);

  // property: any nonzero offset into the rom resets, and the violating call
  // never mutates state
  std::mt19937 rng(7);
  uint16_t call_addr = img.symbols.at("main");
  for (int trial = 0; trial < 50; ++trial) {
    uint16_t k = static_cast<uint16_t>(2 + 2 * (rng() % 500));
    uint16_t target = static_cast<uint16_t>(img.layout.monitor_rom.lo + k);
    DeviceState st = make_state(img);
    st.regs[kRegSp] = 0x0800;
    st.regs[kRegPc] = call_addr;
    st.mem[call_addr + 2] = static_cast<uint8_t>(target & 0xFF);
    st.mem[call_addr + 3] = static_cast<uint8_t>(target >> 8);
    DeviceState before = st;
    auto ev = step(st);
    REQUIRE(ev.has_value());
    CHECK(ev->reason == ViolationReason::IllegalEntry);
    CHECK(same_state(before, st));
  }
}

TEST_CASE("entering at MON_ENTRY is legal and tracked as secure") {
  std::string text = kBoot +
                     "main:\n"
                     "\tcall #MON_ENTRY\n"
                     "\tmov #1, &0x0182\n"
                     "\tjmp $\n"
                     "\t.section monitor\n"
                     "MON_ENTRY:\n"
                     "\tmov r3, r3\n"
                     "\tret\n";
  auto img = assemble(parse_asm(text), MemoryLayout{});
  RunLimits limits;
  limits.trace = true;
  RunResult res = run(img, {}, {}, limits);
  CHECK(res.violations.empty());
  CHECK(res.outcome == Outcome::CleanHalt);
  CHECK(res.executed_secure == 2);  // mov + ret
  int secure_lines = 0;
  for (const auto& t : res.trace) secure_lines += t.secure ? 1 : 0;
  CHECK(secure_lines == 2);
}

TEST_CASE("interrupts are deferred while the monitor runs") {
  std::string text = kBoot +
                     "\t.vector 1, __isr_t\n"
                     "main:\n"
                     "\tbis #8, r2\n"
                     "\tcall #MON_ENTRY\n"
                     "\tmov #1, &0x0182\n"
                     "\tjmp $\n"
                     "__isr_t:\n"
                     "\tinc r11\n"
                     "\treti\n"
                     "\t.section monitor\n"
                     "MON_ENTRY:\n"
                     "\tmov r3, r3\n"
                     "\tmov r3, r3\n"
                     "\tmov r3, r3\n"
                     "\tmov r3, r3\n"
                     "\tret\n";
  auto img = assemble(parse_asm(text), MemoryLayout{});
  RunLimits limits;
  limits.trace = true;
  // due while the monitor executes
  RunResult res = run(img, {IrqEvent{1, 4}}, {}, limits);
  CHECK(res.violations.empty());
  CHECK(res.outcome == Outcome::CleanHalt);
  // the isr body must appear strictly after the last secure trace line
  size_t last_secure = 0, isr_step = 0;
  for (size_t i = 0; i < res.trace.size(); ++i) {
    if (res.trace[i].secure) last_secure = i;
    if (res.trace[i].pc == img.symbols.at("__isr_t")) isr_step = i;
  }
  CHECK(isr_step > last_secure);
  CHECK(res.final_state.regs[11] == 1);
}

TEST_CASE("interrupt delivery pushes pc then sr and clears gie") {
  std::string text = kBoot +
                     "\t.vector 2, __isr_t\n"
                     "main:\n"
                     "\tbis #8, r2\n"
                     "spin:\n"
                     "\tmov r3, r3\n"
                     "\tjmp spin\n"
                     "__isr_t:\n"
                     "\tmov 2(r1), r14\n"
                     "\tmov @r1, r15\n"
                     "\tmov #1, &0x0182\n"
                     "\treti\n";
  auto img = assemble(parse_asm(text), MemoryLayout{});
  RunResult res = run(img, {IrqEvent{2, 5}}, {}, RunLimits{});
  CHECK(res.outcome == Outcome::CleanHalt);
  CHECK(res.violations.empty());
  // saved pc is a code address near the spin loop, saved sr has gie set
  CHECK(img.layout.pmem.contains(res.final_state.regs[14]));
  CHECK((res.final_state.regs[15] & kFlagGie) != 0);
}

TEST_CASE("reti restores the interrupted context") {
  std::string text = kBoot +
                     "\t.vector 1, __isr_t\n"
                     "main:\n"
                     "\tbis #8, r2\n"
                     "\tmov #5, r10\n"
                     "loop:\n"
                     "\tdec r10\n"
                     "\tjnz loop\n"
                     "\tmov r11, &0x0180\n"
                     "\tmov #1, &0x0182\n"
                     "\tjmp $\n"
                     "__isr_t:\n"
                     "\tinc r11\n"
                     "\treti\n";
  auto img = assemble(parse_asm(text), MemoryLayout{});
  RunResult res = run(img, {IrqEvent{1, 6}, IrqEvent{1, 9}}, {}, RunLimits{});
  CHECK(res.outcome == Outcome::CleanHalt);
  CHECK(res.violations.empty());
  REQUIRE(res.outputs.size() == 1);
  CHECK(res.outputs[0] == 2);  // both interrupts arrived, loop unharmed
}

TEST_CASE("interrupts wait for gie") {
  std::string text = kBoot +
                     "\t.vector 1, __isr_t\n"
                     "main:\n"
                     "\tmov #3, r10\n"
                     "wait:\n"
                     "\tdec r10\n"
                     "\tjnz wait\n"
                     "\tbis #8, r2\n"
                     "\tmov r11, &0x0180\n"
                     "\tmov #1, &0x0182\n"
                     "\tjmp $\n"
                     "__isr_t:\n"
                     "\tinc r11\n"
                     "\treti\n";
  auto img = assemble(parse_asm(text), MemoryLayout{});
  // due at step 1, long before gie; it must still arrive, afterwards
  RunResult res = run(img, {IrqEvent{1, 1}}, {}, RunLimits{});
  CHECK(res.violations.empty());
  REQUIRE(res.outputs.size() == 1);
  CHECK(res.outputs[0] == 1);
}

TEST_CASE("reset zeroes registers and secure memory and reloads pc") {
  auto img = image_of(kBoot + "main:\n\tjmp $\n");
  DeviceState st = make_state(img);
  st.regs[5] = 99;
  st.regs[kRegSp] = 0x0FF0;
  st.mem[0x2004] = 0xAB;  // shadow residue
  st.mem[0x2100] = 0xCD;
  st.pending.push_back(IrqEvent{1, 0});
  reset(st);
  for (int r = 1; r < 16; ++r) CHECK(st.regs[r] == 0);
  CHECK(st.regs[kRegPc] == img.read_word(0xFFFE));
  CHECK(st.mem[0x2004] == 0);
  CHECK(st.mem[0x2100] == 0);
  CHECK(st.pending.empty());
  for (uint32_t a = img.layout.secure_shadow.lo; a <= img.layout.secure_shadow.hi; ++a)
    CHECK(st.mem[a] == 0);
}

TEST_CASE("post-reset rerun of a benign app completes normally") {
  auto text = read_file(std::string(EILID_GOLDEN_DIR) + "/sample_app.s");
  auto img = assemble(parse_asm(text), MemoryLayout{});
  RunResult first = run(img, {}, {}, RunLimits{});
  CHECK(first.outcome == Outcome::CleanHalt);

  DeviceState st = make_state(img);
  st.mem = first.final_state.mem;  // dmem keeps whatever the first run left
  reset(st);
  while (!st.halted) {
    auto ev = step(st);
    REQUIRE(!ev);
    REQUIRE(st.steps < 100000);
  }
  CHECK(st.halted);
}

TEST_CASE("outputs and halt port work; run outcomes are distinguished") {
  auto img =
      image_of("main:\n\tmov #42, &0x0180\n\tmov #7, &0x0180\n\tmov #1, &0x0182\n\tjmp $\n");
  RunResult res = run(img, {}, {}, RunLimits{});
  CHECK(res.outcome == Outcome::CleanHalt);
  CHECK(res.outputs == std::vector<uint16_t>{42, 7});

  auto spin = image_of("main:\n\tjmp main\n");
  RunLimits limits;
  limits.max_steps = 50;
  limits.halt_on_self_jump = false;
  CHECK(run(spin, {}, {}, limits).outcome == Outcome::StepLimit);
  limits.halt_on_self_jump = true;
  CHECK(run(spin, {}, {}, limits).outcome == Outcome::CleanHalt);
}

TEST_CASE("undecodable fetch is a violation, not a crash") {
  auto img = image_of("main:\n\tjmp $\n");
  img.write_word(img.symbols.at("main"), 0xFFFF);
  RunResult res = run(img, {}, {}, RunLimits{});
  REQUIRE(res.violations.size() == 1);
  CHECK(res.violations[0].reason == ViolationReason::FetchFromData);
}

TEST_CASE("attack hooks obey the hardware rules") {
  auto img = image_of(kBoot + "main:\n\tmov r3, r3\n\tmov #1, &0x0182\n\tjmp $\n");
  WriteHook h;
  h.step = 1;
  h.addr = 0x2000;
  h.value = 0xAAAA;
  RunResult res = run(img, {}, {h}, RunLimits{});
  REQUIRE(res.violations.size() == 1);
  CHECK(res.violations[0].reason == ViolationReason::SecureAccess);

  h.addr = 0x0400;
  res = run(img, {}, {h}, RunLimits{});
  CHECK(res.violations.empty());
  CHECK(res.final_state.read_word(0x0400) == 0xAAAA);
}

TEST_CASE("flag semantics drive the conditional jumps") {
  std::string text =
      "main:\n"
      "\tmov #5, r10\n"
      "\tcmp #5, r10\n"
      "\tjz is_equal\n"
      "\tmov #0, &0x0180\n"
      "is_equal:\n"
      "\tmov #1, &0x0180\n"
      "\tcmp #6, r10\n"
      "\tjl is_less\n"
      "\tmov #2, &0x0180\n"
      "is_less:\n"
      "\tmov #3, &0x0180\n"
      "\tmov #0xFFFF, r11\n"
      "\tinc r11\n"
      "\tjc carry_set\n"
      "\tmov #4, &0x0180\n"
      "carry_set:\n"
      "\tmov #1, &0x0182\n"
      "\tjmp $\n";
  auto res = run(image_of(text), {}, {}, RunLimits{});
  CHECK(res.outputs == std::vector<uint16_t>{1, 3});
}

TEST_CASE("schedule text parses") {
  auto sched = parse_schedule("# t\nirq 3 at 120\nirq 1 at 7\n");
  REQUIRE(sched.size() == 2);
  CHECK(sched[0].vector == 3);
  CHECK(sched[0].step == 120);
  CHECK_THROWS(parse_schedule("irq x at 1\n"));
}
