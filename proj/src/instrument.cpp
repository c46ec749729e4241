#include "eilid/instrument.hpp"

#include <algorithm>
#include <set>
#include <sstream>

namespace eilid {

const char* site_kind_name(SiteKind k) {
  switch (k) {
    case SiteKind::Call: return "call";
    case SiteKind::IndirectCall: return "indirect-call";
    case SiteKind::Return: return "return";
    case SiteKind::IsrPrologue: return "isr-prologue";
    case SiteKind::IsrEpilogue: return "isr-epilogue";
    case SiteKind::MainEntry: return "main-entry";
  }
  return "?";
}

std::vector<InstrumentationSite> find_sites(const AsmProgram& prog) {
  std::vector<InstrumentationSite> sites;
  for (size_t i = 0; i < prog.items.size(); ++i) {
    const AsmItem& it = prog.items[i];
    if (it.origin != Origin::Original) continue;
    if (it.kind == ItemKind::Label) {
      if (it.label == "main")
        sites.push_back({SiteKind::MainEntry, i, 0});
      else if (prog.is_isr_label(it.label))
        sites.push_back({SiteKind::IsrPrologue, i, 0});
      continue;
    }
    if (it.kind != ItemKind::Instr) continue;
    switch (it.instr.mnemonic) {
      case Mnemonic::Call:
        sites.push_back({it.instr.operands[0].mode == AddrMode::Immediate
                             ? SiteKind::Call
                             : SiteKind::IndirectCall,
                         i, 0});
        break;
      case Mnemonic::Ret:
        sites.push_back({SiteKind::Return, i, 0});
        break;
      case Mnemonic::Reti:
        sites.push_back({SiteKind::IsrEpilogue, i, 0});
        break;
      default:
        break;
    }
  }
  return sites;
}

namespace {

bool is_reserved(uint8_t r) { return r >= kReservedRegLo && r <= kReservedRegHi; }

struct RegUse {
  std::set<uint8_t> reads;
  std::set<uint8_t> writes;
};

void use_of_operand(const Operand& op, bool is_dst, Mnemonic m, RegUse& u) {
  switch (op.mode) {
    case AddrMode::Register:
      if (is_dst) {
        bool reads_dst = m == Mnemonic::Add || m == Mnemonic::Sub || m == Mnemonic::And ||
                         m == Mnemonic::Bis || m == Mnemonic::Xor || m == Mnemonic::Cmp ||
                         m == Mnemonic::Bit || m == Mnemonic::Swpb || m == Mnemonic::Rra ||
                         m == Mnemonic::Rrc || m == Mnemonic::Inc || m == Mnemonic::Dec;
        bool writes_dst = m != Mnemonic::Cmp && m != Mnemonic::Bit;
        if (reads_dst) u.reads.insert(op.reg);
        if (writes_dst) u.writes.insert(op.reg);
      } else {
        u.reads.insert(op.reg);
      }
      break;
    case AddrMode::Indexed:
    case AddrMode::Indirect:
      u.reads.insert(op.reg);
      break;
    case AddrMode::IndirectAutoInc:
      u.reads.insert(op.reg);
      u.writes.insert(op.reg);
      break;
    default:
      break;
  }
}

RegUse reg_use(const Instruction& in) {
  RegUse u;
  if (is_jump(in.mnemonic) || in.mnemonic == Mnemonic::Ret || in.mnemonic == Mnemonic::Reti)
    return u;
  if (is_two_op(in.mnemonic)) {
    use_of_operand(in.operands[0], false, in.mnemonic, u);
    use_of_operand(in.operands[1], true, in.mnemonic, u);
    return u;
  }
  switch (in.mnemonic) {
    case Mnemonic::Push:
    case Mnemonic::Call:
      use_of_operand(in.operands[0], false, in.mnemonic, u);
      break;
    case Mnemonic::Pop:
      if (in.operands[0].mode == AddrMode::Register)
        u.writes.insert(in.operands[0].reg);
      else
        use_of_operand(in.operands[0], false, in.mnemonic, u);
      break;
    default:  // swpb/rra/rrc/inc/dec
      use_of_operand(in.operands[0], true, in.mnemonic, u);
      break;
  }
  return u;
}

bool breaks_region(const AsmItem& it) {
  if (it.kind != ItemKind::Instr) return true;
  Mnemonic m = it.instr.mnemonic;
  return is_jump(m) || m == Mnemonic::Call || m == Mnemonic::Ret || m == Mnemonic::Reti;
}

AsmItem make_push_pop(Mnemonic m, uint8_t reg) {
  AsmItem it;
  it.kind = ItemKind::Instr;
  it.instr = Instruction{m, false, {Operand::make_reg(reg)}, {}};
  it.origin = Origin::Instrumented;
  return it;
}

}  // namespace

RewriteResult rewrite_reserved_registers(const AsmProgram& prog) {
  RewriteResult out;
  out.program.isr_prefix = prog.isr_prefix;

  // Regions are maximal straight-line runs of original instructions.
  size_t n = prog.items.size();
  size_t i = 0;
  while (i < n) {
    const AsmItem& it = prog.items[i];
    if (it.origin != Origin::Original || it.kind != ItemKind::Instr || breaks_region(it)) {
      out.program.items.push_back(it);
      ++i;
      continue;
    }
    size_t end = i;
    while (end < n && prog.items[end].origin == Origin::Original &&
           prog.items[end].kind == ItemKind::Instr && !breaks_region(prog.items[end]))
      ++end;

    // First/last touch per reserved register; read-before-write is a value
    // that flows in from outside the region and cannot be saved locally.
    std::map<uint8_t, std::pair<size_t, size_t>> span;
    std::set<uint8_t> written;
    for (size_t k = i; k < end; ++k) {
      RegUse u = reg_use(prog.items[k].instr);
      for (uint8_t r : u.reads) {
        if (!is_reserved(r)) continue;
        if (!written.count(r))
          throw InstrumentError(
              "line " + std::to_string(prog.items[k].source_line) + ": r" +
              std::to_string(r) +
              " is reserved and its value would have to survive a call/jump boundary");
        span[r].second = k;
      }
      for (uint8_t r : u.writes) {
        if (!is_reserved(r)) continue;
        written.insert(r);
        if (!span.count(r)) span[r] = {k, k};
        span[r].second = k;
      }
    }

    if (span.empty()) {
      for (size_t k = i; k < end; ++k) out.program.items.push_back(prog.items[k]);
      i = end;
      continue;
    }

    std::vector<uint8_t> regs;
    for (const auto& [r, _] : span) regs.push_back(r);
    std::ostringstream w;
    w << "reserved register" << (regs.size() > 1 ? "s" : "") << " ";
    for (size_t k = 0; k < regs.size(); ++k) w << (k ? ", " : "") << "r" << int(regs[k]);
    w << " wrapped with push/pop near line " << prog.items[i].source_line;
    out.warnings.push_back(w.str());

    for (size_t k = i; k < end; ++k) {
      for (uint8_t r : regs)
        if (span[r].first == k) out.program.items.push_back(make_push_pop(Mnemonic::Push, r));
      out.program.items.push_back(prog.items[k]);
      for (auto rit = regs.rbegin(); rit != regs.rend(); ++rit)
        if (span[*rit].second == k)
          out.program.items.push_back(make_push_pop(Mnemonic::Pop, *rit));
    }
    i = end;
  }
  return out;
}

void forbid_reserved_registers(const AsmProgram& prog) {
  for (const auto& it : prog.items) {
    if (it.kind != ItemKind::Instr || it.origin != Origin::Original) continue;
    RegUse u = reg_use(it.instr);
    for (uint8_t r = kReservedRegLo; r <= kReservedRegHi; ++r)
      if (u.reads.count(r) || u.writes.count(r))
        throw InstrumentError("line " + std::to_string(it.source_line) + ": r" +
                              std::to_string(r) + " is reserved");
  }
}

namespace {

AsmItem instr_item(Instruction in, int template_id) {
  AsmItem it;
  it.kind = ItemKind::Instr;
  it.instr = std::move(in);
  it.origin = Origin::Instrumented;
  it.template_id = template_id;
  return it;
}

Instruction mov(Operand src, Operand dst) {
  return Instruction{Mnemonic::Mov, false, {std::move(src), std::move(dst)}, {}};
}

Instruction call_monitor() {
  return Instruction{Mnemonic::Call, false, {Operand::make_imm(0, kMonEntryLabel)}, {}};
}

}  // namespace

InstrumentResult instrument(const AsmProgram& prog, const MemoryLayout& ml,
                            const InstrumentOptions& opts) {
  if (prog.has_instrumented_marker())
    throw InstrumentError("program already carries the instrumented marker");

  const MonitorConfig& cfg = opts.monitor;
  auto sites = find_sites(prog);

  // Indirect jumps (a register moved into pc) are out of policy; a direct
  // #imm branch stays legal since its target is static.
  for (const auto& it : prog.items) {
    if (it.kind != ItemKind::Instr || it.origin != Origin::Original) continue;
    const Instruction& in = it.instr;
    if (in.mnemonic == Mnemonic::Mov && in.operands[1].mode == AddrMode::Register &&
        in.operands[1].reg == kRegPc && in.operands[0].mode != AddrMode::Immediate)
      throw InstrumentError("line " + std::to_string(it.source_line) +
                            ": indirect jump through a register is not supported");
    if (in.mnemonic == Mnemonic::Call && in.operands[0].mode == AddrMode::IndirectAutoInc)
      throw InstrumentError("line " + std::to_string(it.source_line) +
                            ": call @rN+ cannot be instrumented");
  }

  InstrumentResult out;
  out.program.isr_prefix = prog.isr_prefix;
  InstrumentationReport& rep = out.report;
  for (const auto& s : sites) rep.site_counts[s.kind] += 1;

  // Function table: global .text labels that are not ISRs.
  {
    std::set<std::string> globals;
    for (const auto& g : prog.global_labels()) globals.insert(g);
    for (const auto& it : prog.items)
      if (it.kind == ItemKind::Label && globals.count(it.label) &&
          !prog.is_isr_label(it.label))
        out.table.entries.push_back(it.label);
  }
  if (out.table.entries.size() > cfg.table_slots)
    throw InstrumentError("function table needs " + std::to_string(out.table.entries.size()) +
                          " entries but only " + std::to_string(cfg.table_slots) +
                          " slots are configured");
  out.table.emitted_slots = cfg.table_slots;

  std::map<size_t, SiteKind> site_at;
  for (const auto& s : sites) site_at[s.item_index] = s.kind;

  struct RetPatch {
    size_t mov_index;   // T1 `mov #ret, r6`
    size_t call_index;  // the original call
  };
  std::vector<RetPatch> patches;
  std::vector<AsmItem>& items = out.program.items;

  {
    AsmItem marker;
    marker.kind = ItemKind::Directive;
    marker.directive.kind = DirectiveKind::InstrumentedMarker;
    marker.origin = Origin::Instrumented;
    items.push_back(std::move(marker));
  }

  auto add = [&](Instruction in, int tid) -> size_t {
    items.push_back(instr_item(std::move(in), tid));
    return items.size() - 1;
  };
  auto count_insert = [&](SiteKind k, int n) {
    rep.inserted_instructions[k] += n;
    rep.inserted_total += n;
  };
  auto sp_top = [] { return Operand::make_indirect(kRegSp); };
  auto sp_word_above = [] { return Operand::make_indexed(2, kRegSp); };
  auto r = Operand::make_reg;

  auto emit_store_ra_block = [&](size_t original_call_pos_placeholder) {
    size_t mov_idx = add(mov(Operand::make_imm(0), r(6)), 1);
    add(mov(Operand::make_imm(cfg.sel_store_ra), r(4)), 1);
    add(call_monitor(), 1);
    patches.push_back({mov_idx, original_call_pos_placeholder});
  };

  for (size_t i = 0; i < prog.items.size(); ++i) {
    const AsmItem& it = prog.items[i];
    auto found = site_at.find(i);
    SiteKind kind = found == site_at.end() ? SiteKind::MainEntry : found->second;
    bool is_site = found != site_at.end();

    if (is_site && kind == SiteKind::Call) {
      emit_store_ra_block(0);  // call index patched in just below
      items.push_back(it);
      patches.back().call_index = items.size() - 1;
      count_insert(kind, 3);
      continue;
    }
    if (is_site && kind == SiteKind::IndirectCall) {
      add(mov(it.instr.operands[0], r(6)), 6);  // resolve target into r6
      add(mov(Operand::make_imm(cfg.sel_check_ind), r(4)), 6);
      add(call_monitor(), 6);
      emit_store_ra_block(0);
      items.push_back(it);
      patches.back().call_index = items.size() - 1;
      count_insert(kind, 6);
      continue;
    }
    if (is_site && kind == SiteKind::Return) {
      add(mov(sp_top(), r(6)), 2);
      add(mov(Operand::make_imm(cfg.sel_check_ra), r(4)), 2);
      add(call_monitor(), 2);
      items.push_back(it);
      count_insert(kind, 3);
      continue;
    }
    if (is_site && kind == SiteKind::IsrEpilogue) {
      add(mov(sp_word_above(), r(6)), 4);
      add(mov(sp_top(), r(7)), 4);
      add(mov(Operand::make_imm(cfg.sel_check_rai), r(4)), 4);
      add(call_monitor(), 4);
      items.push_back(it);
      count_insert(kind, 4);
      continue;
    }
    if (is_site && kind == SiteKind::IsrPrologue) {
      items.push_back(it);  // the label first
      add(mov(sp_word_above(), r(6)), 3);
      add(mov(sp_top(), r(7)), 3);
      add(mov(Operand::make_imm(cfg.sel_store_rai), r(4)), 3);
      add(call_monitor(), 3);
      count_insert(kind, 4);
      continue;
    }
    if (is_site && kind == SiteKind::MainEntry) {
      items.push_back(it);
      add(mov(Operand::make_imm(0, kFunctionTableLabel), r(6)), 5);
      add(mov(Operand::make_imm(cfg.table_slots), r(7)), 5);
      add(mov(Operand::make_imm(cfg.sel_store_ind), r(4)), 5);
      add(call_monitor(), 5);
      count_insert(kind, 4);
      continue;
    }
    items.push_back(it);
  }

  // Function table as immutable pmem words, padded to the configured size so
  // the monitor's scan length never depends on the program.
  {
    AsmItem text;
    text.kind = ItemKind::Directive;
    text.directive.kind = DirectiveKind::Text;
    text.origin = Origin::Instrumented;
    items.push_back(std::move(text));

    AsmItem lbl;
    lbl.kind = ItemKind::Label;
    lbl.label = kFunctionTableLabel;
    lbl.origin = Origin::Instrumented;
    items.push_back(std::move(lbl));

    AsmItem words;
    words.kind = ItemKind::Directive;
    words.directive.kind = DirectiveKind::Word;
    for (const auto& f : out.table.entries) words.directive.words.push_back({f, 0});
    for (size_t k = out.table.entries.size(); k < cfg.table_slots; ++k)
      words.directive.words.push_back({"", kTablePadWord});
    words.origin = Origin::Instrumented;
    items.push_back(std::move(words));
    rep.table_words = cfg.table_slots;
  }

  for (auto& mi : generate_monitor(cfg)) items.push_back(std::move(mi));

  if (prog.defines_label(kMonEntryLabel) || prog.defines_label(kFunctionTableLabel))
    throw InstrumentError("program defines a reserved label (MON_ENTRY/__func_table)");

  // Return-address fixpoint: patch `mov #ret, r6` immediates and re-run
  // layout until no address moves. Immediates are fixed-size, so this
  // normally settles in two rounds.
  for (int round = 1; round <= opts.fixpoint_cap; ++round) {
    AddressMap map = layout(out.program, ml);
    bool changed = false;
    for (const auto& p : patches) {
      uint16_t ret = static_cast<uint16_t>(map.addr[p.call_index] +
                                           item_size(items[p.call_index]));
      Operand& opnd = items[p.mov_index].instr.operands[0];
      if (opnd.value != ret) {
        opnd.value = ret;
        changed = true;
      }
    }
    rep.iterations = round;
    if (!changed) break;
    if (round == opts.fixpoint_cap)
      throw InstrumentError("return-address fixpoint not reached in " +
                            std::to_string(opts.fixpoint_cap) + " iterations");
  }

  // App pmem footprint: text placement with and without instrumentation,
  // monitor excluded (it lives in its own rom section).
  rep.original_bytes = layout(prog, ml).text_end - ml.pmem.lo;
  {
    AddressMap map = layout(out.program, ml);
    rep.instrumented_bytes = map.text_end - ml.pmem.lo;
    rep.monitor_bytes = map.monitor_end - ml.monitor_rom.lo;
  }
  return out;
}

bool fully_instrumented(const AsmProgram& prog) {
  for (size_t i = 0; i < prog.items.size(); ++i) {
    const AsmItem& it = prog.items[i];
    if (it.kind != ItemKind::Instr || it.origin != Origin::Original) continue;
    Mnemonic m = it.instr.mnemonic;
    if (m != Mnemonic::Call && m != Mnemonic::Ret && m != Mnemonic::Reti) continue;
    // The template block ends with `call #MON_ENTRY` right before the site.
    if (i == 0) return false;
    const AsmItem& prev = prog.items[i - 1];
    if (prev.kind != ItemKind::Instr || prev.origin != Origin::Instrumented ||
        prev.instr.mnemonic != Mnemonic::Call ||
        prev.instr.operands[0].symbol != kMonEntryLabel)
      return false;
  }
  return true;
}

std::string InstrumentationReport::to_key_value() const {
  std::ostringstream os;
  auto kinds = {SiteKind::Call, SiteKind::IndirectCall, SiteKind::Return,
                SiteKind::IsrPrologue, SiteKind::IsrEpilogue, SiteKind::MainEntry};
  for (SiteKind k : kinds) {
    auto s = site_counts.find(k);
    os << "sites." << site_kind_name(k) << "=" << (s == site_counts.end() ? 0 : s->second)
       << "\n";
  }
  for (SiteKind k : kinds) {
    auto s = inserted_instructions.find(k);
    os << "inserted." << site_kind_name(k) << "="
       << (s == inserted_instructions.end() ? 0 : s->second) << "\n";
  }
  os << "inserted.total=" << inserted_total << "\n";
  os << "table.words=" << table_words << "\n";
  os << "size.original_bytes=" << original_bytes << "\n";
  os << "size.instrumented_bytes=" << instrumented_bytes << "\n";
  os << "size.monitor_bytes=" << monitor_bytes << "\n";
  double pct = original_bytes == 0
                   ? 0.0
                   : 100.0 * (static_cast<double>(instrumented_bytes) - original_bytes) /
                         original_bytes;
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", pct);
  os << "size.overhead_pct=" << buf << "\n";
  os << "fixpoint.iterations=" << iterations << "\n";
  return os.str();
}

StaticOverhead static_overhead(const InstrumentationReport& report) {
  StaticOverhead so;
  so.delta_bytes =
      static_cast<int64_t>(report.instrumented_bytes) - report.original_bytes;
  so.delta_pct = report.original_bytes == 0
                     ? 0.0
                     : 100.0 * static_cast<double>(so.delta_bytes) / report.original_bytes;
  so.sites = report.site_counts;
  so.inserted = report.inserted_instructions;
  return so;
}

std::string StaticOverhead::to_key_value() const {
  std::ostringstream os;
  os << "overhead.delta_bytes=" << delta_bytes << "\n";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", delta_pct);
  os << "overhead.delta_pct=" << buf << "\n";
  for (const auto& [k, v] : sites) os << "overhead.sites." << site_kind_name(k) << "=" << v << "\n";
  for (const auto& [k, v] : inserted)
    os << "overhead.inserted." << site_kind_name(k) << "=" << v << "\n";
  return os.str();
}

}  // namespace eilid
