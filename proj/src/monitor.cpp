#include "eilid/monitor.hpp"

#include "eilid/machine.hpp"

namespace eilid {

uint16_t event_selector(const MonitorConfig& cfg, const MonitorEvent& ev) {
  struct V {
    const MonitorConfig& c;
    uint16_t operator()(const EvStoreRa&) const { return c.sel_store_ra; }
    uint16_t operator()(const EvCheckRa&) const { return c.sel_check_ra; }
    uint16_t operator()(const EvStoreRai&) const { return c.sel_store_rai; }
    uint16_t operator()(const EvCheckRai&) const { return c.sel_check_rai; }
    uint16_t operator()(const EvStoreInd&) const { return c.sel_store_ind; }
    uint16_t operator()(const EvCheckInd&) const { return c.sel_check_ind; }
  };
  return std::visit(V{cfg}, ev);
}

std::vector<uint8_t> ShadowStackModel::shadow_bytes() const {
  std::vector<uint8_t> out;
  out.reserve(slots.size() * 2);
  for (uint16_t w : slots) {
    out.push_back(static_cast<uint8_t>(w & 0xFF));
    out.push_back(static_cast<uint8_t>(w >> 8));
  }
  return out;
}

namespace {

Verdict store_word(ShadowStackModel& m, uint16_t value, SlotTag tag) {
  if (m.index >= m.cfg.capacity)
    return Verdict::violation(kCodeOverflow, "shadow stack overflow");
  m.slots[m.index] = value;
  m.tags[m.index] = tag;
  m.index += 1;
  return Verdict::pass();
}

Verdict check_word(ShadowStackModel& m, uint16_t value, uint16_t mismatch_code,
                   const char* what) {
  if (m.index == 0) return Verdict::violation(kCodeUnderflow, "shadow stack underflow");
  m.index -= 1;
  if (m.slots[m.index] != value)
    return Verdict::violation(mismatch_code, what);
  return Verdict::pass();
}

}  // namespace

Verdict oracle_apply(ShadowStackModel& m, const MonitorEvent& ev, const PmemReader& read_pmem) {
  if (auto* e = std::get_if<EvStoreRa>(&ev)) {
    return store_word(m, e->ret_addr, SlotTag::ReturnAddress);
  }
  if (auto* e = std::get_if<EvCheckRa>(&ev)) {
    return check_word(m, e->ret_addr, kCodeRaMismatch, "return address mismatch");
  }
  if (auto* e = std::get_if<EvStoreRai>(&ev)) {
    if (m.index + 2 > m.cfg.capacity)
      return Verdict::violation(kCodeOverflow, "shadow stack overflow");
    store_word(m, e->pc, SlotTag::IrqPc);
    store_word(m, e->sr, SlotTag::IrqSr);
    return Verdict::pass();
  }
  if (auto* e = std::get_if<EvCheckRai>(&ev)) {
    if (m.index < 2) return Verdict::violation(kCodeUnderflow, "shadow stack underflow");
    Verdict v = check_word(m, e->sr, kCodeIrqMismatch, "interrupt context mismatch");
    if (!v.ok) return v;
    return check_word(m, e->pc, kCodeIrqMismatch, "interrupt context mismatch");
  }
  if (auto* e = std::get_if<EvStoreInd>(&ev)) {
    m.table_base = e->table_base;
    m.table_count = e->count;
    return Verdict::pass();
  }
  const auto& e = std::get<EvCheckInd>(ev);
  m.scan_flag = 0;
  for (uint16_t i = 0; i < m.table_count; ++i) {
    if (read_pmem(static_cast<uint16_t>(m.table_base + 2 * i)) == e.target) m.scan_flag = 1;
  }
  if (m.scan_flag != 1)
    return Verdict::violation(kCodeIndNotInTable, "indirect call target not in function table");
  return Verdict::pass();
}

namespace {

struct FragmentBuilder {
  std::vector<AsmItem> items;

  void label(const std::string& name) {
    AsmItem it;
    it.kind = ItemKind::Label;
    it.label = name;
    it.origin = Origin::Monitor;
    items.push_back(std::move(it));
  }
  void ins(Instruction in) {
    AsmItem it;
    it.kind = ItemKind::Instr;
    it.instr = std::move(in);
    it.origin = Origin::Monitor;
    items.push_back(std::move(it));
  }
  void dir(Directive d) {
    AsmItem it;
    it.kind = ItemKind::Directive;
    it.directive = std::move(d);
    it.origin = Origin::Monitor;
    items.push_back(std::move(it));
  }

  void two(Mnemonic m, Operand src, Operand dst) {
    ins(Instruction{m, false, {std::move(src), std::move(dst)}, {}});
  }
  void one(Mnemonic m, Operand op) { ins(Instruction{m, false, {std::move(op)}, {}}); }
  void jump(Mnemonic m, const std::string& target) {
    ins(Instruction{m, false, {}, JumpTarget{target, 0}});
  }
};

}  // namespace

std::vector<AsmItem> generate_monitor(const MonitorConfig& cfg) {
  if (cfg.capacity == 0) throw MonitorConfigError("shadow capacity must be nonzero");
  if (cfg.table_slots == 0) throw MonitorConfigError("table slots must be nonzero");

  FragmentBuilder b;
  auto reg = Operand::make_reg;
  auto imm = [](int32_t v) { return Operand::make_imm(v); };
  auto abs = [](int32_t v) { return Operand::make_abs(v); };
  const uint8_t scratch = 4;  // r4 is free once the selector is consumed
  const uint8_t index = 5;

  // r4 = shadow_base + 2*r5
  auto emit_slot_addr = [&]() {
    b.two(Mnemonic::Mov, reg(index), reg(scratch));
    b.two(Mnemonic::Add, reg(index), reg(scratch));
    b.two(Mnemonic::Add, imm(cfg.shadow_base), reg(scratch));
  };
  auto emit_trigger = [&](uint16_t code) {
    b.two(Mnemonic::Mov, imm(code), abs(cfg.trigger));  // hardware resets here
  };

  b.dir(Directive{DirectiveKind::Section, "monitor", {}, {}, -1, ""});
  b.label(kMonEntryLabel);
  struct Sel {
    uint16_t value;
    const char* target;
  } sels[] = {
      {cfg.sel_store_ra, "S_EILID_store_ra"},
      {cfg.sel_check_ra, "S_EILID_check_ra"},
      {cfg.sel_store_rai, "S_EILID_store_rai"},
      {cfg.sel_check_rai, "S_EILID_check_rai"},
      {cfg.sel_store_ind, "S_EILID_store_ind_func"},
      {cfg.sel_check_ind, "S_EILID_check_ind_func"},
  };
  for (const auto& s : sels) {
    b.two(Mnemonic::Cmp, imm(s.value), reg(4));
    b.jump(Mnemonic::Jz, s.target);
  }
  emit_trigger(kCodeBadSelector);

  b.label("S_EILID_store_ra");
  b.two(Mnemonic::Cmp, imm(cfg.capacity), reg(index));
  b.jump(Mnemonic::Jge, "__mon_overflow");
  emit_slot_addr();
  b.two(Mnemonic::Mov, reg(6), Operand::make_indexed(0, scratch));
  b.one(Mnemonic::Inc, reg(index));
  b.jump(Mnemonic::Jmp, "S_EILID_exit");

  b.label("S_EILID_check_ra");
  b.two(Mnemonic::Cmp, imm(1), reg(index));
  b.jump(Mnemonic::Jl, "__mon_underflow");
  b.one(Mnemonic::Dec, reg(index));
  emit_slot_addr();
  b.two(Mnemonic::Cmp, Operand::make_indirect(scratch), reg(6));
  b.jump(Mnemonic::Jnz, "__mon_ra_mismatch");
  b.jump(Mnemonic::Jmp, "S_EILID_exit");

  b.label("S_EILID_store_rai");
  b.two(Mnemonic::Cmp, imm(cfg.capacity - 1), reg(index));
  b.jump(Mnemonic::Jge, "__mon_overflow");
  emit_slot_addr();
  b.two(Mnemonic::Mov, reg(6), Operand::make_indexed(0, scratch));  // saved PC
  b.two(Mnemonic::Mov, reg(7), Operand::make_indexed(2, scratch));  // saved SR
  b.two(Mnemonic::Add, imm(2), reg(index));
  b.jump(Mnemonic::Jmp, "S_EILID_exit");

  b.label("S_EILID_check_rai");
  b.two(Mnemonic::Cmp, imm(2), reg(index));
  b.jump(Mnemonic::Jl, "__mon_underflow");
  b.one(Mnemonic::Dec, reg(index));
  emit_slot_addr();
  b.two(Mnemonic::Cmp, Operand::make_indirect(scratch), reg(7));
  b.jump(Mnemonic::Jnz, "__mon_irq_mismatch");
  b.one(Mnemonic::Dec, reg(index));
  emit_slot_addr();
  b.two(Mnemonic::Cmp, Operand::make_indirect(scratch), reg(6));
  b.jump(Mnemonic::Jnz, "__mon_irq_mismatch");
  b.jump(Mnemonic::Jmp, "S_EILID_exit");

  b.label("S_EILID_store_ind_func");
  b.two(Mnemonic::Mov, reg(6), abs(cfg.table_base_addr()));
  b.two(Mnemonic::Mov, reg(7), abs(cfg.table_count_addr()));
  b.jump(Mnemonic::Jmp, "S_EILID_exit");

  // Fixed-iteration scan: every slot is visited so the cost is independent of
  // where (or whether) the target sits in the table.
  b.label("S_EILID_check_ind_func");
  b.two(Mnemonic::Mov, imm(0), abs(cfg.scan_flag_addr()));
  b.two(Mnemonic::Mov, abs(cfg.table_base_addr()), reg(scratch));
  b.two(Mnemonic::Mov, abs(cfg.table_count_addr()), reg(7));
  b.label("__mon_scan");
  b.two(Mnemonic::Cmp, Operand::make_indirect(scratch), reg(6));
  b.jump(Mnemonic::Jnz, "__mon_scan_next");
  b.two(Mnemonic::Mov, imm(1), abs(cfg.scan_flag_addr()));
  b.label("__mon_scan_next");
  b.two(Mnemonic::Add, imm(2), reg(scratch));
  b.one(Mnemonic::Dec, reg(7));
  b.jump(Mnemonic::Jnz, "__mon_scan");
  b.two(Mnemonic::Cmp, imm(1), abs(cfg.scan_flag_addr()));
  b.jump(Mnemonic::Jnz, "__mon_ind_mismatch");
  b.jump(Mnemonic::Jmp, "S_EILID_exit");

  b.label("__mon_ra_mismatch");
  emit_trigger(kCodeRaMismatch);
  b.label("__mon_irq_mismatch");
  emit_trigger(kCodeIrqMismatch);
  b.label("__mon_ind_mismatch");
  emit_trigger(kCodeIndNotInTable);
  b.label("__mon_overflow");
  emit_trigger(kCodeOverflow);
  b.label("__mon_underflow");
  emit_trigger(kCodeUnderflow);

  b.label("S_EILID_exit");
  b.ins(Instruction{Mnemonic::Ret, false, {}, {}});
  return std::move(b.items);
}

}  // namespace eilid
