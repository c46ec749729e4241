#include "eilid/machine.hpp"

#include <algorithm>
#include <iomanip>
#include <sstream>

namespace eilid {

const char* violation_reason_name(ViolationReason r) {
  switch (r) {
    case ViolationReason::FetchFromData: return "fetch-from-data";
    case ViolationReason::PmemWrite: return "pmem-write";
    case ViolationReason::SecureAccess: return "secure-access";
    case ViolationReason::IllegalEntry: return "illegal-entry";
    case ViolationReason::MonitorMismatch: return "monitor-mismatch";
    case ViolationReason::Overflow: return "overflow";
    case ViolationReason::Underflow: return "underflow";
    case ViolationReason::TriggerAbuse: return "trigger-abuse";
  }
  return "?";
}

std::optional<ViolationReason> violation_reason_from_name(const std::string& s) {
  for (int i = 0; i <= static_cast<int>(ViolationReason::TriggerAbuse); ++i) {
    auto r = static_cast<ViolationReason>(i);
    if (s == violation_reason_name(r)) return r;
  }
  return std::nullopt;
}

const char* outcome_name(Outcome o) {
  switch (o) {
    case Outcome::CleanHalt: return "clean-halt";
    case Outcome::ViolationReset: return "violation-reset";
    case Outcome::StepLimit: return "step-limit";
  }
  return "?";
}

DeviceState make_state(const MemoryImage& img) {
  DeviceState st;
  st.mem = img.bytes;
  st.layout = img.layout;
  if (auto e = img.symbol("MON_ENTRY")) st.mon_entry = *e;
  reset(st);
  return st;
}

void reset(DeviceState& st) {
  st.regs.fill(0);
  for (uint32_t a = st.layout.secure_shadow.lo; a <= st.layout.secure_shadow.hi; ++a)
    st.mem[a] = 0;
  for (uint32_t a = st.layout.monitor_state.lo; a <= st.layout.monitor_state.hi; ++a)
    st.mem[a] = 0;
  st.pending.clear();
  st.halted = false;
  st.regs[kRegPc] = st.read_word(st.layout.reset_vector);
  st.secure = st.layout.monitor_rom.contains(st.regs[kRegPc]);
}

namespace {

// Staged execution of one instruction: reads are checked up front, writes are
// collected and validated before anything is committed. `secure` is the state
// the current instruction executes in; st.secure is only updated on commit.
struct Exec {
  DeviceState& st;
  bool secure;
  std::array<uint16_t, 16> regs;  // working copy
  struct Write {
    uint16_t addr;
    uint16_t value;
    bool byte;
  };
  std::vector<Write> writes;
  std::optional<ViolationEvent> viol;

  explicit Exec(DeviceState& s, bool secure_now) : st(s), secure(secure_now), regs(s.regs) {}

  void fail(ViolationReason r, uint16_t fault, const std::string& detail, uint16_t code = 0) {
    if (viol) return;
    viol = ViolationEvent{st.steps, r, code, fault, st.regs[kRegPc], detail};
  }

  uint16_t read_mem(uint16_t addr, bool byte) {
    if (st.layout.in_secure(addr) && !secure) {
      fail(ViolationReason::SecureAccess, addr, "read of secure memory from normal state");
      return 0;
    }
    if (byte) return st.mem[addr];
    addr &= 0xFFFE;
    return static_cast<uint16_t>(st.mem[addr] | (st.mem[addr + 1] << 8));
  }

  void stage_write(uint16_t addr, uint16_t value, bool byte) {
    writes.push_back({addr, value, byte});
  }

  bool validate_writes() {
    for (const auto& w : writes) {
      if (w.addr == st.layout.trigger || (!w.byte && (w.addr & 0xFFFE) == (st.layout.trigger & 0xFFFE))) {
        if (!secure) {
          fail(ViolationReason::TriggerAbuse, w.addr, "trigger write from normal state");
          return false;
        }
        // Monitor-raised violation: the reason code rides in the value.
        ViolationReason r = ViolationReason::MonitorMismatch;
        std::string detail = "monitor reported mismatch";
        if (w.value == kCodeOverflow) {
          r = ViolationReason::Overflow;
          detail = "shadow stack overflow";
        } else if (w.value == kCodeUnderflow) {
          r = ViolationReason::Underflow;
          detail = "shadow stack underflow";
        } else if (w.value == kCodeRaMismatch) {
          detail = "return address mismatch";
        } else if (w.value == kCodeIrqMismatch) {
          detail = "interrupt context mismatch";
        } else if (w.value == kCodeIndNotInTable) {
          detail = "indirect call target not in function table";
        } else if (w.value == kCodeBadSelector) {
          detail = "bad monitor selector";
        }
        viol = ViolationEvent{st.steps, r, w.value, w.addr, st.regs[kRegPc], detail};
        return false;
      }
      if (st.layout.write_protected(w.addr)) {
        fail(ViolationReason::PmemWrite, w.addr, "write into protected program memory");
        return false;
      }
      if (st.layout.in_secure(w.addr) && !secure) {
        fail(ViolationReason::SecureAccess, w.addr, "write to secure memory from normal state");
        return false;
      }
    }
    return true;
  }

  void commit(uint16_t next_pc) {
    // boundary invariant: the secure flag tracks PC's region
    st.secure = st.layout.monitor_rom.contains(next_pc);
    for (const auto& w : writes) {
      if (w.byte) {
        st.mem[w.addr] = static_cast<uint8_t>(w.value & 0xFF);
      } else {
        uint16_t a = w.addr & 0xFFFE;
        st.mem[a] = static_cast<uint8_t>(w.value & 0xFF);
        st.mem[a + 1] = static_cast<uint8_t>(w.value >> 8);
      }
      if (w.addr == st.layout.out_port) st.outputs.push_back(w.value);
      if (w.addr == st.layout.halt_port) st.halted = true;
    }
    regs[kRegPc] = next_pc;
    st.regs = regs;
  }
};

uint16_t operand_addr(Exec& ex, const Operand& op) {
  switch (op.mode) {
    case AddrMode::Indexed:
      return static_cast<uint16_t>((ex.regs[op.reg] + op.value) & 0xFFFF);
    case AddrMode::Absolute:
    case AddrMode::Symbolic:
      return static_cast<uint16_t>(op.value & 0xFFFF);
    case AddrMode::Indirect:
    case AddrMode::IndirectAutoInc:
      return ex.regs[op.reg];
    default:
      return 0;
  }
}

uint16_t read_operand(Exec& ex, const Operand& op, bool byte) {
  switch (op.mode) {
    case AddrMode::Register:
      return byte ? (ex.regs[op.reg] & 0xFF) : ex.regs[op.reg];
    case AddrMode::Immediate:
      return static_cast<uint16_t>(op.value & 0xFFFF);
    case AddrMode::IndirectAutoInc: {
      uint16_t v = ex.read_mem(ex.regs[op.reg], byte);
      ex.regs[op.reg] = static_cast<uint16_t>(ex.regs[op.reg] + (byte ? 1 : 2));
      return v;
    }
    default:
      return ex.read_mem(operand_addr(ex, op), byte);
  }
}

void write_operand(Exec& ex, const Operand& op, uint16_t v, bool byte) {
  if (op.mode == AddrMode::Register) {
    ex.regs[op.reg] = byte ? (v & 0xFF) : v;
    return;
  }
  ex.stage_write(operand_addr(ex, op), v, byte);
}

struct Flags {
  bool z, n, c, v;
};

void apply_flags(Exec& ex, const Flags& f) {
  uint16_t sr = ex.regs[kRegSr];
  sr &= static_cast<uint16_t>(~(kFlagZ | kFlagN | kFlagC | kFlagV));
  if (f.z) sr |= kFlagZ;
  if (f.n) sr |= kFlagN;
  if (f.c) sr |= kFlagC;
  if (f.v) sr |= kFlagV;
  ex.regs[kRegSr] = sr;
}

Flags add_flags(uint16_t a, uint16_t b, uint32_t r, uint16_t mask_sign) {
  uint16_t res = static_cast<uint16_t>(r);
  return {(res & (mask_sign == 0x8000 ? 0xFFFF : 0x00FF)) == 0,
          (res & mask_sign) != 0,
          r > (mask_sign == 0x8000 ? 0xFFFFu : 0xFFu),
          ((~(a ^ b)) & (a ^ res) & mask_sign) != 0};
}

Flags sub_flags(uint16_t a, uint16_t b, uint32_t r, uint16_t mask_sign) {
  // a - b computed as a + ~b + 1; C means "no borrow".
  uint16_t res = static_cast<uint16_t>(r);
  return {(res & (mask_sign == 0x8000 ? 0xFFFF : 0x00FF)) == 0,
          (res & mask_sign) != 0,
          r > (mask_sign == 0x8000 ? 0xFFFFu : 0xFFu),
          ((a ^ b) & (a ^ res) & mask_sign) != 0};
}

// Executes one decoded instruction; returns the next PC.
uint16_t execute(Exec& ex, const Instruction& in, uint16_t pc, int size) {
  uint16_t next = static_cast<uint16_t>(pc + size);
  Mnemonic m = in.mnemonic;
  bool byte = in.byte_suffix;
  uint16_t sign = byte ? 0x80 : 0x8000;

  if (is_jump(m)) {
    uint16_t target = static_cast<uint16_t>(in.target.addend & 0xFFFF);
    uint16_t sr = ex.regs[kRegSr];
    bool z = sr & kFlagZ, n = sr & kFlagN, c = sr & kFlagC, v = sr & kFlagV;
    bool take = false;
    switch (m) {
      case Mnemonic::Jmp: take = true; break;
      case Mnemonic::Jz: take = z; break;
      case Mnemonic::Jnz: take = !z; break;
      case Mnemonic::Jc: take = c; break;
      case Mnemonic::Jnc: take = !c; break;
      case Mnemonic::Jn: take = n; break;
      case Mnemonic::Jge: take = n == v; break;
      case Mnemonic::Jl: take = n != v; break;
      default: break;
    }
    return take ? target : next;
  }

  switch (m) {
    case Mnemonic::Mov: {
      uint16_t s = read_operand(ex, in.operands[0], byte);
      write_operand(ex, in.operands[1], s, byte);
      if (in.operands[1].mode == AddrMode::Register && in.operands[1].reg == kRegPc)
        next = s;
      break;
    }
    case Mnemonic::Add: {
      uint16_t s = read_operand(ex, in.operands[0], false);
      uint16_t d = read_operand(ex, in.operands[1], false);
      uint32_t r = static_cast<uint32_t>(d) + s;
      write_operand(ex, in.operands[1], static_cast<uint16_t>(r), false);
      apply_flags(ex, add_flags(d, s, r, 0x8000));
      break;
    }
    case Mnemonic::Sub:
    case Mnemonic::Cmp: {
      uint16_t s = read_operand(ex, in.operands[0], byte);
      uint16_t d = read_operand(ex, in.operands[1], byte);
      uint32_t mask = byte ? 0xFF : 0xFFFF;
      uint32_t r = (static_cast<uint32_t>(d) + ((~s) & mask) + 1);
      Flags f = sub_flags(d, s, r, sign);
      if (m == Mnemonic::Sub)
        write_operand(ex, in.operands[1], static_cast<uint16_t>(r & mask), byte);
      apply_flags(ex, f);
      break;
    }
    case Mnemonic::And:
    case Mnemonic::Bit: {
      uint16_t s = read_operand(ex, in.operands[0], false);
      uint16_t d = read_operand(ex, in.operands[1], false);
      uint16_t r = d & s;
      if (m == Mnemonic::And) write_operand(ex, in.operands[1], r, false);
      apply_flags(ex, {r == 0, (r & 0x8000) != 0, r != 0, false});
      break;
    }
    case Mnemonic::Bis: {
      uint16_t s = read_operand(ex, in.operands[0], false);
      uint16_t d = read_operand(ex, in.operands[1], false);
      write_operand(ex, in.operands[1], d | s, false);
      break;
    }
    case Mnemonic::Xor: {
      uint16_t s = read_operand(ex, in.operands[0], false);
      uint16_t d = read_operand(ex, in.operands[1], false);
      uint16_t r = d ^ s;
      write_operand(ex, in.operands[1], r, false);
      apply_flags(ex, {r == 0, (r & 0x8000) != 0, r != 0, (d & s & 0x8000) != 0});
      break;
    }
    case Mnemonic::Push: {
      uint16_t v = read_operand(ex, in.operands[0], false);
      ex.regs[kRegSp] = static_cast<uint16_t>(ex.regs[kRegSp] - 2);
      ex.stage_write(ex.regs[kRegSp], v, false);
      break;
    }
    case Mnemonic::Pop: {
      uint16_t v = ex.read_mem(ex.regs[kRegSp], false);
      ex.regs[kRegSp] = static_cast<uint16_t>(ex.regs[kRegSp] + 2);
      write_operand(ex, in.operands[0], v, false);
      break;
    }
    case Mnemonic::Call: {
      const Operand& op = in.operands[0];
      uint16_t target;
      switch (op.mode) {
        case AddrMode::Immediate: target = static_cast<uint16_t>(op.value & 0xFFFF); break;
        case AddrMode::Register: target = ex.regs[op.reg]; break;
        default: target = read_operand(ex, op, false); break;
      }
      ex.regs[kRegSp] = static_cast<uint16_t>(ex.regs[kRegSp] - 2);
      ex.stage_write(ex.regs[kRegSp], next, false);
      next = target;
      break;
    }
    case Mnemonic::Swpb: {
      uint16_t v = read_operand(ex, in.operands[0], false);
      write_operand(ex, in.operands[0], static_cast<uint16_t>((v << 8) | (v >> 8)), false);
      break;
    }
    case Mnemonic::Rra: {
      uint16_t v = read_operand(ex, in.operands[0], false);
      uint16_t r = static_cast<uint16_t>((v >> 1) | (v & 0x8000));
      write_operand(ex, in.operands[0], r, false);
      apply_flags(ex, {r == 0, (r & 0x8000) != 0, (v & 1) != 0, false});
      break;
    }
    case Mnemonic::Rrc: {
      uint16_t v = read_operand(ex, in.operands[0], false);
      bool old_c = ex.regs[kRegSr] & kFlagC;
      uint16_t r = static_cast<uint16_t>((v >> 1) | (old_c ? 0x8000 : 0));
      write_operand(ex, in.operands[0], r, false);
      apply_flags(ex, {r == 0, (r & 0x8000) != 0, (v & 1) != 0, false});
      break;
    }
    case Mnemonic::Inc: {
      uint16_t d = read_operand(ex, in.operands[0], false);
      uint32_t r = static_cast<uint32_t>(d) + 1;
      write_operand(ex, in.operands[0], static_cast<uint16_t>(r), false);
      apply_flags(ex, add_flags(d, 1, r, 0x8000));
      break;
    }
    case Mnemonic::Dec: {
      uint16_t d = read_operand(ex, in.operands[0], false);
      uint32_t r = static_cast<uint32_t>(d) + 0xFFFF;  // d - 1
      Flags f = sub_flags(d, 1, r, 0x8000);
      write_operand(ex, in.operands[0], static_cast<uint16_t>(r), false);
      apply_flags(ex, f);
      break;
    }
    case Mnemonic::Ret: {
      next = ex.read_mem(ex.regs[kRegSp], false);
      ex.regs[kRegSp] = static_cast<uint16_t>(ex.regs[kRegSp] + 2);
      break;
    }
    case Mnemonic::Reti: {
      ex.regs[kRegSr] = ex.read_mem(ex.regs[kRegSp], false);
      ex.regs[kRegSp] = static_cast<uint16_t>(ex.regs[kRegSp] + 2);
      next = ex.read_mem(ex.regs[kRegSp], false);
      ex.regs[kRegSp] = static_cast<uint16_t>(ex.regs[kRegSp] + 2);
      break;
    }
    default:
      break;
  }
  return next;
}

// One due interrupt, oldest first by (earliest step, queue order).
std::optional<size_t> due_irq(const DeviceState& st) {
  if (st.secure || !(st.regs[kRegSr] & kFlagGie)) return std::nullopt;
  for (size_t i = 0; i < st.pending.size(); ++i)
    if (st.pending[i].step <= st.steps) return i;
  return std::nullopt;
}

std::optional<ViolationEvent> deliver_irq(DeviceState& st, size_t idx) {
  Exec ex(st, /*secure_now=*/false);
  uint16_t sp = ex.regs[kRegSp];
  ex.stage_write(static_cast<uint16_t>(sp - 2), st.regs[kRegPc], false);
  ex.stage_write(static_cast<uint16_t>(sp - 4), st.regs[kRegSr], false);
  if (!ex.validate_writes()) {
    ex.viol->detail = "interrupt context push: " + ex.viol->detail;
    return ex.viol;
  }
  int vec = st.pending[idx].vector;
  uint16_t handler = st.read_word(static_cast<uint16_t>(st.layout.ivt.lo + 2 * vec));
  if (st.layout.monitor_rom.contains(handler) && handler != st.mon_entry)
    return ViolationEvent{st.steps, ViolationReason::IllegalEntry, 0, handler,
                          st.regs[kRegPc], "interrupt vector points into the monitor"};
  ex.regs[kRegSp] = static_cast<uint16_t>(sp - 4);
  ex.regs[kRegSr] = 0;  // GIE cleared on entry
  st.pending.erase(st.pending.begin() + static_cast<ptrdiff_t>(idx));
  ex.commit(handler);
  return std::nullopt;
}

}  // namespace

std::optional<ViolationEvent> step(DeviceState& st) {
  if (auto idx = due_irq(st)) return deliver_irq(st, *idx);

  uint16_t pc = st.regs[kRegPc];
  bool in_rom = st.layout.monitor_rom.contains(pc);
  if (!st.layout.in_code(pc))
    return ViolationEvent{st.steps, ViolationReason::FetchFromData, 0, pc, pc,
                          "instruction fetch outside executable memory"};

  auto dec = decode(st.mem, pc);
  if (!dec)
    return ViolationEvent{st.steps, ViolationReason::FetchFromData, 0, pc, pc,
                          "undecodable instruction word"};

  Exec ex(st, in_rom);
  uint16_t next = execute(ex, dec->instr, pc, dec->size);
  if (!ex.viol) ex.validate_writes();
  // A transfer into the monitor is only legal at MON_ENTRY; caught before the
  // transferring instruction commits.
  if (!ex.viol && !in_rom && st.layout.monitor_rom.contains(next) && next != st.mon_entry)
    ex.fail(ViolationReason::IllegalEntry, next,
            "monitor entered at an address other than MON_ENTRY");
  if (ex.viol) return ex.viol;
  ex.commit(next);
  st.steps += 1;
  if (in_rom) st.steps_secure += 1;
  return std::nullopt;
}

RunResult run(const MemoryImage& img, const std::vector<IrqEvent>& schedule,
              const std::vector<WriteHook>& hooks, const RunLimits& limits) {
  RunResult res;
  DeviceState st = make_state(img);
  st.pending = schedule;
  std::vector<WriteHook> hk = hooks;

  auto record_violation = [&](const ViolationEvent& ev) {
    res.violations.push_back(ev);
    reset(st);
  };

  while (true) {
    if (st.halted) {
      res.outcome = Outcome::CleanHalt;
      break;
    }
    if (st.steps >= limits.max_steps) {
      res.outcome = Outcome::StepLimit;
      break;
    }

    // Attack hooks model writes by the (normal-state) program itself; one due
    // while the monitor runs waits for the next normal boundary.
    bool violated = false;
    if (!st.secure) {
      for (auto& h : hk) {
        if (h.fired) continue;
        bool due = h.at_pc ? st.regs[kRegPc] == h.pc : st.steps >= h.step;
        if (!due) continue;
        h.fired = true;
        Exec ex(st, /*secure_now=*/false);
        ex.stage_write(h.addr, h.value, false);
        if (!ex.validate_writes()) {
          ex.viol->detail = "attack hook: " + ex.viol->detail;
          record_violation(*ex.viol);
          violated = true;
          break;
        }
        ex.commit(st.regs[kRegPc]);
      }
    }
    if (violated) {
      if (!limits.resume_after_reset) {
        res.outcome = Outcome::ViolationReset;
        break;
      }
      continue;
    }

    bool irq_due = due_irq(st).has_value();
    if (limits.halt_on_self_jump && !irq_due && st.layout.in_code(st.regs[kRegPc])) {
      auto dec = decode(st.mem, st.regs[kRegPc]);
      if (dec && dec->instr.mnemonic == Mnemonic::Jmp &&
          static_cast<uint16_t>(dec->instr.target.addend & 0xFFFF) == st.regs[kRegPc]) {
        res.outcome = Outcome::CleanHalt;
        st.halted = true;
        break;
      }
    }

    uint64_t before = st.steps;
    uint16_t pc = st.regs[kRegPc];
    bool was_secure_fetch = st.layout.monitor_rom.contains(pc);
    auto ev = step(st);
    if (ev) {
      record_violation(*ev);
      if (!limits.resume_after_reset) {
        res.outcome = Outcome::ViolationReset;
        break;
      }
      continue;
    }
    if (limits.trace && st.steps > before) {
      auto dec = decode(st.mem, pc);
      res.trace.push_back(TraceEntry{before, pc,
                                     dec ? dec->instr.mnemonic : Mnemonic::Mov,
                                     was_secure_fetch});
    }
  }

  res.executed_total = st.steps;
  res.executed_secure = st.steps_secure;
  res.executed_normal = st.steps - st.steps_secure;
  res.outputs = st.outputs;
  res.final_state = std::move(st);
  return res;
}

std::vector<IrqEvent> parse_schedule(const std::string& text) {
  std::vector<IrqEvent> out;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    size_t h = line.find('#');
    if (h != std::string::npos) line = line.substr(0, h);
    std::istringstream is(line);
    std::string w1, w2, w3;
    if (!(is >> w1)) continue;
    uint64_t step_at = 0;
    int vec = 0;
    if (w1 != "irq" || !(is >> vec >> w2 >> step_at) || w2 != "at" || vec < 0 || vec > 14)
      throw std::runtime_error("schedule line " + std::to_string(line_no) +
                               ": expected 'irq <vector-id> at <step>'");
    out.push_back(IrqEvent{vec, step_at});
  }
  return out;
}

std::string format_trace(const std::vector<TraceEntry>& trace) {
  std::ostringstream os;
  for (const auto& t : trace) {
    os << t.step << "\t0x" << std::hex << std::setw(4) << std::setfill('0') << t.pc
       << std::dec << "\t" << mnemonic_name(t.mnemonic) << "\t" << (t.secure ? 1 : 0) << "\n";
  }
  return os.str();
}

}  // namespace eilid
