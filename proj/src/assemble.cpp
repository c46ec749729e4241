#include "eilid/assemble.hpp"

#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

namespace eilid {

namespace {

struct ModeBits {
  int as;
  uint8_t reg;
};

ModeBits src_bits(const Operand& op) {
  switch (op.mode) {
    case AddrMode::Register: return {0, op.reg};
    case AddrMode::Indexed: return {1, op.reg};
    case AddrMode::Symbolic: return {1, kRegPc};
    case AddrMode::Absolute: return {1, kRegSr};
    case AddrMode::Indirect: return {2, op.reg};
    case AddrMode::IndirectAutoInc: return {3, op.reg};
    case AddrMode::Immediate: return {3, kRegPc};
  }
  return {0, 0};
}

Operand operand_from_src_bits(int as, uint8_t reg, uint16_t ext) {
  switch (as) {
    case 0: return Operand::make_reg(reg);
    case 1:
      if (reg == kRegPc) return {AddrMode::Symbolic, 0, ext, {}};
      if (reg == kRegSr) return Operand::make_abs(ext);
      return Operand::make_indexed(ext, reg);
    case 2: return Operand::make_indirect(reg);
    default:
      if (reg == kRegPc) return Operand::make_imm(ext);
      return Operand::make_autoinc(reg);
  }
}

uint16_t resolve_value(const std::string& symbol, int32_t addend,
                       const SymbolResolver& resolve) {
  if (symbol.empty()) return static_cast<uint16_t>(addend & 0xFFFF);
  auto a = resolve(symbol);
  if (!a) throw AssembleError("unresolved symbol '" + symbol + "'");
  return static_cast<uint16_t>((*a + addend) & 0xFFFF);
}

int jump_cond(Mnemonic m) { return static_cast<int>(m) - static_cast<int>(Mnemonic::Jmp); }

}  // namespace

std::vector<uint16_t> encode(const Instruction& in, uint16_t addr,
                             const SymbolResolver& resolve) {
  std::vector<uint16_t> words;
  Mnemonic m = in.mnemonic;
  if (is_jump(m)) {
    uint16_t target = in.target.self()
                          ? addr
                          : resolve_value(in.target.symbol, in.target.addend, resolve);
    int32_t delta = static_cast<int32_t>(target) - (static_cast<int32_t>(addr) + 2);
    if (delta % 2 != 0) throw AssembleError("jump target is not word-aligned");
    int32_t off = delta / 2;
    if (off < -512 || off > 511) throw AssembleError("jump offset out of range");
    words.push_back(static_cast<uint16_t>(0xC000 | (jump_cond(m) << 10) | (off & 0x3FF)));
    return words;
  }
  if (m == Mnemonic::Ret || m == Mnemonic::Reti) {
    words.push_back(m == Mnemonic::Ret ? 0xE000 : 0xE001);
    return words;
  }
  if (is_two_op(m)) {
    const Operand& src = in.operands.at(0);
    const Operand& dst = in.operands.at(1);
    ModeBits s = src_bits(src);
    ModeBits d = src_bits(dst);
    if (d.as > 1) throw AssembleError("bad destination mode");
    uint16_t w = static_cast<uint16_t>((static_cast<int>(m) << 12) |
                                       (in.byte_suffix ? 1 << 11 : 0) | (s.as << 9) |
                                       (s.reg << 5) | (d.as << 4) | d.reg);
    words.push_back(w);
    if (src.has_ext_word()) words.push_back(resolve_value(src.symbol, src.value, resolve));
    if (dst.has_ext_word()) words.push_back(resolve_value(dst.symbol, dst.value, resolve));
    return words;
  }
  // one-operand
  const Operand& op = in.operands.at(0);
  ModeBits s = src_bits(op);
  int mn = static_cast<int>(m) - static_cast<int>(Mnemonic::Push);
  words.push_back(static_cast<uint16_t>(0x8000 | (mn << 10) | (s.as << 8) | (s.reg << 4)));
  if (op.has_ext_word()) words.push_back(resolve_value(op.symbol, op.value, resolve));
  return words;
}

std::optional<Decoded> decode(const std::array<uint8_t, 0x10000>& mem, uint16_t addr) {
  auto word_at = [&](uint16_t a) -> uint16_t {
    a &= 0xFFFE;
    return static_cast<uint16_t>(mem[a] | (mem[a + 1] << 8));
  };
  uint16_t w = word_at(addr);
  Decoded out;
  if ((w & 0x8000) == 0) {  // two-op
    Mnemonic m = static_cast<Mnemonic>((w >> 12) & 0x7);
    bool bsuf = (w >> 11) & 1;
    if (bsuf && m != Mnemonic::Mov && m != Mnemonic::Cmp) return std::nullopt;
    int s_as = (w >> 9) & 0x3;
    uint8_t s_reg = (w >> 5) & 0xF;
    int d_ad = (w >> 4) & 0x1;
    uint8_t d_reg = w & 0xF;
    int ext_i = 1;
    uint16_t s_ext = 0, d_ext = 0;
    bool s_has = s_as == 1 || (s_as == 3 && s_reg == kRegPc);
    bool d_has = d_ad == 1;
    if (s_has) s_ext = word_at(addr + 2 * ext_i++);
    if (d_has) d_ext = word_at(addr + 2 * ext_i++);
    out.instr.mnemonic = m;
    out.instr.byte_suffix = bsuf;
    out.instr.operands = {operand_from_src_bits(s_as, s_reg, s_ext),
                          operand_from_src_bits(d_ad, d_reg, d_ext)};
    out.size = 2 * ext_i;
    return out;
  }
  if ((w & 0xC000) == 0x8000) {  // one-op
    int mn = (w >> 10) & 0xF;
    if (mn > static_cast<int>(Mnemonic::Dec) - static_cast<int>(Mnemonic::Push))
      return std::nullopt;
    if (w & 0x000F) return std::nullopt;
    Mnemonic m = static_cast<Mnemonic>(static_cast<int>(Mnemonic::Push) + mn);
    int as = (w >> 8) & 0x3;
    uint8_t reg = (w >> 4) & 0xF;
    bool has = as == 1 || (as == 3 && reg == kRegPc);
    uint16_t ext = has ? word_at(addr + 2) : 0;
    Operand op = operand_from_src_bits(as, reg, ext);
    if (m != Mnemonic::Push && m != Mnemonic::Call) {
      if (op.mode == AddrMode::Indirect || op.mode == AddrMode::IndirectAutoInc ||
          op.mode == AddrMode::Immediate)
        return std::nullopt;
    }
    out.instr.mnemonic = m;
    out.instr.operands = {op};
    out.size = has ? 4 : 2;
    return out;
  }
  if ((w & 0xE000) == 0xC000) {  // jump
    int cond = (w >> 10) & 0x7;
    int32_t off = w & 0x3FF;
    if (off & 0x200) off -= 0x400;
    out.instr.mnemonic = static_cast<Mnemonic>(static_cast<int>(Mnemonic::Jmp) + cond);
    out.instr.target = JumpTarget{"", static_cast<int32_t>((addr + 2 + 2 * off) & 0xFFFF)};
    out.size = 2;
    return out;
  }
  // misc
  uint16_t id = w & 0x1FFF;
  if (id > 1) return std::nullopt;
  out.instr.mnemonic = id == 0 ? Mnemonic::Ret : Mnemonic::Reti;
  out.size = 2;
  return out;
}

MemoryImage assemble(const AsmProgram& prog, const MemoryLayout& ml) {
  AddressMap map = layout(prog, ml);
  MemoryImage img;
  img.layout = ml;

  for (size_t i = 0; i < prog.items.size(); ++i)
    if (prog.items[i].kind == ItemKind::Label)
      img.symbols[prog.items[i].label] = static_cast<uint16_t>(map.addr[i]);

  SymbolResolver resolve = [&](const std::string& s) { return img.symbol(s); };

  std::set<std::string> vector_bound;
  for (size_t i = 0; i < prog.items.size(); ++i) {
    const AsmItem& it = prog.items[i];
    uint16_t addr = static_cast<uint16_t>(map.addr[i]);
    if (it.kind == ItemKind::Instr) {
      std::vector<uint16_t> words;
      try {
        words = encode(it.instr, addr, resolve);
      } catch (const AssembleError& e) {
        throw AssembleError("line " + std::to_string(it.source_line) + ": " + e.what());
      }
      for (size_t k = 0; k < words.size(); ++k)
        img.write_word(static_cast<uint16_t>(addr + 2 * k), words[k]);
    } else if (it.kind == ItemKind::Directive) {
      const Directive& d = it.directive;
      if (d.kind == DirectiveKind::Word) {
        for (size_t k = 0; k < d.words.size(); ++k)
          img.write_word(static_cast<uint16_t>(addr + 2 * k),
                         resolve_value(d.words[k].symbol, d.words[k].value, resolve));
      } else if (d.kind == DirectiveKind::Byte) {
        for (size_t k = 0; k < d.bytes.size(); ++k)
          img.bytes[static_cast<uint16_t>(addr + k)] = d.bytes[k];
      } else if (d.kind == DirectiveKind::Vector) {
        auto a = img.symbol(d.vector_label);
        if (!a) throw AssembleError("unresolved vector label '" + d.vector_label + "'");
        img.write_word(static_cast<uint16_t>(ml.ivt.lo + 2 * d.vector_id), *a);
        vector_bound.insert(d.vector_label);
      }
    }
  }

  for (const auto& [name, addr] : img.symbols) {
    if (name.rfind(prog.isr_prefix, 0) == 0 && !vector_bound.count(name))
      throw AssembleError("ISR '" + name + "' has no .vector binding");
  }

  uint16_t entry;
  if (auto boot = img.symbol("__boot")) {
    entry = *boot;
  } else if (auto main_addr = img.symbol("main")) {
    entry = *main_addr;
  } else {
    throw AssembleError("no entry symbol (__boot or main)");
  }
  img.write_word(ml.reset_vector, entry);
  return img;
}

void save_image(const MemoryImage& img, const std::string& bin_path,
                const std::string& sidecar_path) {
  std::ofstream bin(bin_path, std::ios::binary);
  if (!bin) throw AssembleError("cannot write " + bin_path);
  bin.write(reinterpret_cast<const char*>(img.bytes.data()),
            static_cast<std::streamsize>(img.bytes.size()));

  std::ofstream sc(sidecar_path);
  if (!sc) throw AssembleError("cannot write " + sidecar_path);
  auto hex = [](uint32_t v) {
    std::ostringstream os;
    os << "0x" << std::hex << std::setw(4) << std::setfill('0') << v;
    return os.str();
  };
  const MemoryLayout& ml = img.layout;
  auto region = [&](const char* name, const Region& r) {
    sc << "region " << name << " " << hex(r.lo) << " " << hex(r.hi) << "\n";
  };
  region("mmio", ml.mmio);
  region("dmem", ml.dmem);
  region("secure_shadow", ml.secure_shadow);
  region("monitor_state", ml.monitor_state);
  region("monitor_rom", ml.monitor_rom);
  region("pmem", ml.pmem);
  region("ivt", ml.ivt);
  sc << "port out " << hex(ml.out_port) << "\n";
  sc << "port halt " << hex(ml.halt_port) << "\n";
  sc << "port trigger " << hex(ml.trigger) << "\n";
  sc << "stack_bytes " << hex(ml.stack_bytes) << "\n";
  for (const auto& [name, addr] : img.symbols) sc << "symbol " << name << " " << hex(addr) << "\n";
}

MemoryImage load_image(const std::string& bin_path, const std::string& sidecar_path) {
  MemoryImage img;
  std::ifstream bin(bin_path, std::ios::binary);
  if (!bin) throw AssembleError("cannot read " + bin_path);
  bin.read(reinterpret_cast<char*>(img.bytes.data()),
           static_cast<std::streamsize>(img.bytes.size()));
  if (bin.gcount() != static_cast<std::streamsize>(img.bytes.size()))
    throw AssembleError("image file is not 64 KiB: " + bin_path);

  std::ifstream sc(sidecar_path);
  if (!sc) throw AssembleError("cannot read " + sidecar_path);
  std::string line;
  MemoryLayout& ml = img.layout;
  while (std::getline(sc, line)) {
    std::istringstream is(line);
    std::string kind;
    is >> kind;
    if (kind == "region") {
      std::string name;
      uint32_t lo, hi;
      is >> name >> std::hex >> lo >> hi;
      Region r{lo, hi};
      if (name == "mmio") ml.mmio = r;
      else if (name == "dmem") ml.dmem = r;
      else if (name == "secure_shadow") ml.secure_shadow = r;
      else if (name == "monitor_state") ml.monitor_state = r;
      else if (name == "monitor_rom") ml.monitor_rom = r;
      else if (name == "pmem") ml.pmem = r;
      else if (name == "ivt") ml.ivt = r;
      else throw AssembleError("unknown region '" + name + "' in sidecar");
    } else if (kind == "port") {
      std::string name;
      uint32_t v;
      is >> name >> std::hex >> v;
      if (name == "out") ml.out_port = static_cast<uint16_t>(v);
      else if (name == "halt") ml.halt_port = static_cast<uint16_t>(v);
      else if (name == "trigger") ml.trigger = static_cast<uint16_t>(v);
    } else if (kind == "stack_bytes") {
      uint32_t v;
      is >> std::hex >> v;
      ml.stack_bytes = static_cast<uint16_t>(v);
    } else if (kind == "symbol") {
      std::string name;
      uint32_t v;
      is >> name >> std::hex >> v;
      img.symbols[name] = static_cast<uint16_t>(v);
    } else if (!kind.empty()) {
      throw AssembleError("unknown sidecar line: " + line);
    }
  }
  return img;
}

}  // namespace eilid
