#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"
#include "eilid/monitor.hpp"
#include <set>
#include "monitor_harness.hpp"

using namespace eilid;
using eilid::testing::EventSequenceGen;
using eilid::testing::MonitorHarness;

namespace {
PmemReader null_pmem() {
  return [](uint16_t) -> uint16_t { return 0; };
}
}  // namespace

TEST_CASE("store at index 2 lands at 0x2004 and bumps the index, oracle side") {
  MonitorConfig cfg;
  ShadowStackModel m(cfg);
  m.index = 2;
  auto v = oracle_apply(m, EvStoreRa{0xBABE}, null_pmem());
  CHECK(v.ok);
  CHECK(m.index == 3);
  CHECK(m.slots[2] == 0xBABE);
  auto bytes = m.shadow_bytes();
  CHECK(bytes[4] == 0xBE);  // byte offset 4 == address 0x2004
  CHECK(bytes[5] == 0xBA);
}

TEST_CASE("store at index 2 lands at 0x2004 and bumps the index, generated monitor") {
  MonitorHarness h;
  h.st.regs[5] = 2;
  auto [v, cost] = h.run_event(EvStoreRa{0xBABE});
  CHECK(v.ok);
  CHECK(h.st.regs[5] == 3);
  CHECK(h.st.read_word(0x2004) == 0xBABE);
  CHECK(cost > 0);
}

TEST_CASE("push then matching check is the identity from an empty stack") {
  MonitorHarness h;
  ShadowStackModel m(h.cfg);
  auto pm = null_pmem();
  CHECK(oracle_apply(m, EvStoreRa{0xE123}, pm).ok);
  CHECK(oracle_apply(m, EvCheckRa{0xE123}, pm).ok);
  CHECK(m.index == 0);

  CHECK(h.run_event(EvStoreRa{0xE123}).first.ok);
  CHECK(h.run_event(EvCheckRa{0xE123}).first.ok);
  CHECK(h.st.regs[5] == 0);
}

TEST_CASE("verdict catalogue on the oracle") {
  MonitorConfig cfg;
  auto pm = null_pmem();

  ShadowStackModel m(cfg);
  CHECK(oracle_apply(m, EvStoreRa{0xAAAA}, pm).ok);
  auto v = oracle_apply(m, EvCheckRa{0xBBBB}, pm);
  CHECK(!v.ok);
  CHECK(v.code == kCodeRaMismatch);

  ShadowStackModel m2(cfg);
  v = oracle_apply(m2, EvCheckRa{1}, pm);
  CHECK(!v.ok);
  CHECK(v.code == kCodeUnderflow);

  ShadowStackModel m3(cfg);
  m3.index = cfg.capacity;
  v = oracle_apply(m3, EvStoreRa{1}, pm);
  CHECK(!v.ok);
  CHECK(v.code == kCodeOverflow);

  ShadowStackModel m4(cfg);
  m4.index = cfg.capacity - 1;
  v = oracle_apply(m4, EvStoreRai{1, 2}, pm);
  CHECK(!v.ok);
  CHECK(v.code == kCodeOverflow);

  ShadowStackModel m5(cfg);
  m5.index = 1;
  v = oracle_apply(m5, EvCheckRai{1, 2}, pm);
  CHECK(!v.ok);
  CHECK(v.code == kCodeUnderflow);
}

TEST_CASE("table membership check, both directions, oracle and monitor") {
  MonitorHarness h;
  ShadowStackModel m(h.cfg);
  uint16_t count = static_cast<uint16_t>(h.table_words.size());

  CHECK(oracle_apply(m, EvStoreInd{h.table_addr, count}, h.pmem_reader()).ok);
  CHECK(oracle_apply(m, EvCheckInd{h.table_words[2]}, h.pmem_reader()).ok);
  auto v = oracle_apply(m, EvCheckInd{0x0123}, h.pmem_reader());
  CHECK(!v.ok);
  CHECK(v.code == kCodeIndNotInTable);

  CHECK(h.run_event(EvStoreInd{h.table_addr, count}).first.ok);
  CHECK(h.st.read_word(h.cfg.table_base_addr()) == h.table_addr);
  CHECK(h.st.read_word(h.cfg.table_count_addr()) == count);
  CHECK(h.run_event(EvCheckInd{h.table_words[2]}).first.ok);
  auto [mv, cost] = h.run_event(EvCheckInd{0x0123});
  CHECK(!mv.ok);
  CHECK(mv.code == kCodeIndNotInTable);
  (void)cost;
}

TEST_CASE("interrupt context takes two slots and checks out in reverse order") {
  MonitorHarness h;
  ShadowStackModel m(h.cfg);
  auto pm = null_pmem();
  CHECK(oracle_apply(m, EvStoreRai{0xE010, 0x000C}, pm).ok);
  CHECK(m.index == 2);
  CHECK(m.slots[0] == 0xE010);  // pc first
  CHECK(m.slots[1] == 0x000C);  // sr second
  CHECK(m.tags[0] == SlotTag::IrqPc);
  CHECK(m.tags[1] == SlotTag::IrqSr);
  CHECK(oracle_apply(m, EvCheckRai{0xE010, 0x000C}, pm).ok);
  CHECK(m.index == 0);

  CHECK(h.run_event(EvStoreRai{0xE010, 0x000C}).first.ok);
  CHECK(h.st.regs[5] == 2);
  CHECK(h.st.read_word(0x2000) == 0xE010);
  CHECK(h.st.read_word(0x2002) == 0x000C);
  CHECK(h.run_event(EvCheckRai{0xE010, 0x000C}).first.ok);
  CHECK(h.st.regs[5] == 0);
}

TEST_CASE("200 balanced events replay identically on monitor and oracle") {
  MonitorHarness h;
  ShadowStackModel m(h.cfg);
  std::mt19937 rng(1234);
  std::vector<uint16_t> stack;
  int events = 0;
  CHECK(h.run_event(EvStoreInd{h.table_addr, 4}).first.ok);
  CHECK(oracle_apply(m, EvStoreInd{h.table_addr, 4}, h.pmem_reader()).ok);
  while (events < 200) {
    MonitorEvent ev = EvStoreRa{0};
    if (stack.size() < 4 || (rng() % 2 == 0 && stack.size() < 100)) {
      uint16_t v = static_cast<uint16_t>(rng());
      stack.push_back(v);
      ev = EvStoreRa{v};
    } else {
      uint16_t v = stack.back();
      stack.pop_back();
      ev = EvCheckRa{v};
    }
    ++events;
    auto [mv, cost] = h.run_event(ev);
    auto ov = oracle_apply(m, ev, h.pmem_reader());
    REQUIRE(mv.ok == ov.ok);
    std::string why;
    REQUIRE_MESSAGE(h.agrees_with(m, &why), why, " after event ", events);
    (void)cost;
  }
  CHECK(h.st.regs[5] == stack.size());
}

TEST_CASE("seeded adversarial sequences keep monitor and oracle in lockstep") {
  EventSequenceGen gen(99);
  for (int s = 0; s < 300; ++s) {
    MonitorHarness h;
    ShadowStackModel m(h.cfg);
    auto seq = gen.next_sequence(h);
    for (const auto& entry : seq) {
      auto [mv, cost] = h.run_event(entry.event);
      auto ov = oracle_apply(m, entry.event, h.pmem_reader());
      REQUIRE(mv.ok == ov.ok);
      REQUIRE(mv.code == ov.code);
      CHECK(mv.ok == entry.benign);
      std::string why;
      REQUIRE_MESSAGE(h.agrees_with(m, &why), why);
      if (!mv.ok) break;
      (void)cost;
    }
  }
}

TEST_CASE("fragment never loads the index register from memory") {
  auto items = generate_monitor(MonitorConfig{});
  for (const auto& it : items) {
    if (it.kind != ItemKind::Instr) continue;
    const Instruction& in = it.instr;
    if (in.operands.size() == 2 && in.operands[1].mode == AddrMode::Register &&
        in.operands[1].reg == 5 && in.mnemonic == Mnemonic::Mov)
      CHECK((in.operands[0].mode == AddrMode::Register ||
             in.operands[0].mode == AddrMode::Immediate));
    if (in.mnemonic == Mnemonic::Pop)
      CHECK(!(in.operands[0].mode == AddrMode::Register && in.operands[0].reg == 5));
    // and the index is never spilled out
    if (in.operands.size() == 2 && in.operands[0].mode == AddrMode::Register &&
        in.operands[0].reg == 5 && in.mnemonic == Mnemonic::Mov)
      CHECK(in.operands[1].mode == AddrMode::Register);
  }
}

TEST_CASE("control flow stays inside the fragment until the exit ret") {
  auto items = generate_monitor(MonitorConfig{});
  std::set<std::string> labels;
  for (const auto& it : items)
    if (it.kind == ItemKind::Label) labels.insert(it.label);
  int rets = 0;
  for (size_t i = 0; i < items.size(); ++i) {
    const auto& it = items[i];
    if (it.kind != ItemKind::Instr) continue;
    if (is_jump(it.instr.mnemonic)) CHECK(labels.count(it.instr.target.symbol) == 1);
    CHECK(it.instr.mnemonic != Mnemonic::Call);
    if (it.instr.mnemonic == Mnemonic::Ret) {
      ++rets;
      CHECK(i == items.size() - 1);  // only the exit returns
    }
  }
  CHECK(rets == 1);
  CHECK(items[1].kind == ItemKind::Label);
  CHECK(items[1].label == std::string(kMonEntryLabel));
}

TEST_CASE("zero capacity is rejected") {
  MonitorConfig cfg;
  cfg.capacity = 0;
  CHECK_THROWS_AS(generate_monitor(cfg), MonitorConfigError);
}
