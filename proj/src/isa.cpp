#include "eilid/isa.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <optional>
#include <set>
#include <sstream>

namespace eilid {

namespace {

struct MnemonicInfo {
  const char* name;
  Mnemonic m;
};

constexpr MnemonicInfo kMnemonics[] = {
    {"mov", Mnemonic::Mov},   {"add", Mnemonic::Add},   {"sub", Mnemonic::Sub},
    {"cmp", Mnemonic::Cmp},   {"and", Mnemonic::And},   {"bis", Mnemonic::Bis},
    {"xor", Mnemonic::Xor},   {"bit", Mnemonic::Bit},   {"push", Mnemonic::Push},
    {"pop", Mnemonic::Pop},   {"call", Mnemonic::Call}, {"swpb", Mnemonic::Swpb},
    {"rra", Mnemonic::Rra},   {"rrc", Mnemonic::Rrc},   {"inc", Mnemonic::Inc},
    {"dec", Mnemonic::Dec},   {"jmp", Mnemonic::Jmp},   {"jz", Mnemonic::Jz},
    {"jeq", Mnemonic::Jz},    {"jnz", Mnemonic::Jnz},   {"jne", Mnemonic::Jnz},
    {"jc", Mnemonic::Jc},     {"jnc", Mnemonic::Jnc},   {"jn", Mnemonic::Jn},
    {"jge", Mnemonic::Jge},   {"jl", Mnemonic::Jl},     {"ret", Mnemonic::Ret},
    {"reti", Mnemonic::Reti},
};

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  return s;
}

std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

bool is_ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }
bool is_ident_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.';
}

bool is_ident(const std::string& s) {
  if (s.empty() || !is_ident_start(s[0])) return false;
  return std::all_of(s.begin() + 1, s.end(), is_ident_char);
}

std::optional<int64_t> parse_number(const std::string& text) {
  std::string s = text;
  bool neg = false;
  if (!s.empty() && (s[0] == '-' || s[0] == '+')) {
    neg = s[0] == '-';
    s = s.substr(1);
  }
  if (s.empty()) return std::nullopt;
  int base = 10;
  if (s.size() > 2 && s[0] == '0' && (s[1] == 'x' || s[1] == 'X')) {
    base = 16;
    s = s.substr(2);
  } else if (s.size() > 2 && s[0] == '0' && (s[1] == 'b' || s[1] == 'B')) {
    base = 2;
    s = s.substr(2);
  }
  if (s.empty()) return std::nullopt;
  int64_t v = 0;
  for (char c : s) {
    int d;
    if (std::isdigit(static_cast<unsigned char>(c)))
      d = c - '0';
    else if (std::isxdigit(static_cast<unsigned char>(c)))
      d = std::tolower(c) - 'a' + 10;
    else
      return std::nullopt;
    if (d >= base) return std::nullopt;
    v = v * base + d;
    if (v > 0x7FFFFFFF) return std::nullopt;
  }
  return neg ? -v : v;
}

// "sym", "sym+4", "sym-2", or a plain number.
std::optional<WordValue> parse_value(const std::string& text) {
  std::string s = trim(text);
  if (s.empty()) return std::nullopt;
  if (auto n = parse_number(s)) return WordValue{"", static_cast<int32_t>(*n)};
  size_t split = std::string::npos;
  for (size_t i = 1; i < s.size(); ++i) {
    if (s[i] == '+' || s[i] == '-') {
      split = i;
      break;
    }
  }
  std::string sym = split == std::string::npos ? s : trim(s.substr(0, split));
  if (!is_ident(sym)) return std::nullopt;
  int32_t addend = 0;
  if (split != std::string::npos) {
    auto n = parse_number(s.substr(split));
    if (!n) return std::nullopt;
    addend = static_cast<int32_t>(*n);
  }
  return WordValue{sym, addend};
}

std::optional<uint8_t> parse_register(const std::string& text) {
  std::string s = lower(trim(text));
  if (s == "pc") return kRegPc;
  if (s == "sp") return kRegSp;
  if (s == "sr") return kRegSr;
  if (s.size() >= 2 && s[0] == 'r') {
    auto n = parse_number(s.substr(1));
    if (n && *n >= 0 && *n <= 15) return static_cast<uint8_t>(*n);
  }
  return std::nullopt;
}

const std::set<std::string> kKnownDirectives = {
    ".text", ".data", ".section", ".global", ".globl",
    ".word", ".byte", ".vector", ".eilid_instrumented",
};

struct Parser {
  ParseOptions opts;
  AsmProgram prog;
  int line_no = 0;

  [[noreturn]] void fail(const std::string& msg) const { throw ParseError(line_no, msg); }

  Operand parse_operand(const std::string& raw) {
    std::string s = trim(raw);
    if (s.empty()) fail("empty operand");
    if (s[0] == '#') {
      auto v = parse_value(s.substr(1));
      if (!v) fail("bad immediate '" + s + "'");
      return Operand::make_imm(v->value, v->symbol);
    }
    if (s[0] == '&') {
      auto v = parse_value(s.substr(1));
      if (!v) fail("bad absolute operand '" + s + "'");
      return Operand::make_abs(v->value, v->symbol);
    }
    if (s[0] == '@') {
      bool autoinc = s.back() == '+';
      auto r = parse_register(autoinc ? s.substr(1, s.size() - 2) : s.substr(1));
      if (!r) fail("bad indirect operand '" + s + "'");
      if (*r == kRegPc) fail("indirect addressing through pc is not supported");
      return autoinc ? Operand::make_autoinc(*r) : Operand::make_indirect(*r);
    }
    if (s.back() == ')') {
      size_t open = s.find('(');
      if (open == std::string::npos) fail("bad indexed operand '" + s + "'");
      auto r = parse_register(s.substr(open + 1, s.size() - open - 2));
      if (!r) fail("bad index register in '" + s + "'");
      if (*r == kRegPc || *r == kRegSr)
        fail("indexed addressing on r0/r2 is reserved for symbolic/absolute modes");
      auto v = parse_value(s.substr(0, open));
      if (!v) fail("bad index offset in '" + s + "'");
      return Operand::make_indexed(v->value, *r, v->symbol);
    }
    if (auto r = parse_register(s)) return Operand::make_reg(*r);
    auto v = parse_value(s);
    if (!v) fail("unrecognized operand '" + s + "'");
    if (v->symbol.empty()) return {AddrMode::Symbolic, 0, v->value, {}};
    return Operand::make_sym(v->symbol, v->value);
  }

  std::vector<std::string> split_commas(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
      if (c == ',') {
        out.push_back(trim(cur));
        cur.clear();
      } else {
        cur.push_back(c);
      }
    }
    cur = trim(cur);
    if (!cur.empty()) out.push_back(cur);
    return out;
  }

  void check_dst_mode(const Operand& op) {
    switch (op.mode) {
      case AddrMode::Register:
      case AddrMode::Indexed:
      case AddrMode::Absolute:
      case AddrMode::Symbolic:
        return;
      default:
        fail("destination operand must be register, indexed, absolute, or symbolic");
    }
  }

  void parse_instruction(const std::string& mnemonic_text, const std::string& rest,
                         const std::string& src_text) {
    std::string mn = lower(mnemonic_text);
    bool byte_suffix = false;
    if (mn.size() > 2 && mn.substr(mn.size() - 2) == ".b") {
      byte_suffix = true;
      mn = mn.substr(0, mn.size() - 2);
    }
    const MnemonicInfo* info = nullptr;
    for (const auto& mi : kMnemonics) {
      if (mn == mi.name) {
        info = &mi;
        break;
      }
    }
    if (!info) fail("unknown mnemonic '" + mnemonic_text + "'");
    Mnemonic m = info->m;
    if (byte_suffix && m != Mnemonic::Mov && m != Mnemonic::Cmp)
      fail("byte suffix is only supported on mov/cmp");

    AsmItem item;
    item.kind = ItemKind::Instr;
    item.source_line = line_no;
    item.source_text = src_text;
    item.instr.mnemonic = m;
    item.instr.byte_suffix = byte_suffix;

    auto ops = split_commas(rest);
    if (is_jump(m)) {
      if (ops.size() != 1) fail("jump needs exactly one target");
      std::string t = trim(ops[0]);
      if (t == "$") {
        item.instr.target = JumpTarget{"$", 0};
      } else {
        auto v = parse_value(t);
        if (!v) fail("bad jump target '" + t + "'");
        item.instr.target = JumpTarget{v->symbol, v->value};
      }
    } else if (m == Mnemonic::Ret || m == Mnemonic::Reti) {
      if (!ops.empty()) fail("ret/reti take no operands");
    } else if (is_two_op(m)) {
      if (ops.size() != 2) fail("two-operand instruction needs two operands");
      Operand src = parse_operand(ops[0]);
      Operand dst = parse_operand(ops[1]);
      check_dst_mode(dst);
      item.instr.operands = {src, dst};
    } else {
      if (ops.size() != 1) fail("instruction needs one operand");
      Operand op = parse_operand(ops[0]);
      switch (m) {
        case Mnemonic::Push:
        case Mnemonic::Call:
          break;  // any source mode
        case Mnemonic::Pop:
        case Mnemonic::Swpb:
        case Mnemonic::Rra:
        case Mnemonic::Rrc:
        case Mnemonic::Inc:
        case Mnemonic::Dec:
          check_dst_mode(op);
          break;
        default:
          break;
      }
      item.instr.operands = {op};
    }
    prog.items.push_back(std::move(item));
  }

  void parse_directive(const std::string& word, const std::string& rest,
                       const std::string& src_text) {
    std::string d = lower(word);
    if (!kKnownDirectives.count(d)) fail("unknown directive '" + word + "'");
    AsmItem item;
    item.kind = ItemKind::Directive;
    item.source_line = line_no;
    item.source_text = src_text;
    Directive& dir = item.directive;
    if (d == ".text") {
      dir.kind = DirectiveKind::Text;
    } else if (d == ".data") {
      dir.kind = DirectiveKind::Data;
    } else if (d == ".section") {
      dir.kind = DirectiveKind::Section;
      std::string name = lower(trim(rest));
      if (!name.empty() && name[0] == '.') name = name.substr(1);
      if (name != "text" && name != "data" && name != "monitor")
        fail("unknown section '" + rest + "'");
      dir.name = name;
    } else if (d == ".global" || d == ".globl") {
      dir.kind = DirectiveKind::Global;
      dir.name = trim(rest);
      if (!is_ident(dir.name)) fail("bad .global symbol");
    } else if (d == ".word") {
      dir.kind = DirectiveKind::Word;
      for (const auto& p : split_commas(rest)) {
        auto v = parse_value(p);
        if (!v) fail("bad .word value '" + p + "'");
        dir.words.push_back(*v);
      }
      if (dir.words.empty()) fail(".word needs at least one value");
    } else if (d == ".byte") {
      dir.kind = DirectiveKind::Byte;
      for (const auto& p : split_commas(rest)) {
        auto n = parse_number(p);
        if (!n || *n < -128 || *n > 255) fail("bad .byte value '" + p + "'");
        dir.bytes.push_back(static_cast<uint8_t>(*n & 0xFF));
      }
      if (dir.bytes.empty()) fail(".byte needs at least one value");
    } else if (d == ".vector") {
      dir.kind = DirectiveKind::Vector;
      auto parts = split_commas(rest);
      if (parts.size() != 2) fail(".vector needs <id>, <label>");
      auto id = parse_number(parts[0]);
      if (!id || *id < 0 || *id > 14)
        fail(".vector id must be 0..14 (15 is the reset vector)");
      if (!is_ident(parts[1])) fail("bad .vector label");
      dir.vector_id = static_cast<int>(*id);
      dir.vector_label = parts[1];
    } else {  // .eilid_instrumented
      dir.kind = DirectiveKind::InstrumentedMarker;
    }
    prog.items.push_back(std::move(item));
  }

  void parse_line(std::string line) {
    size_t sc = line.find(';');
    if (sc != std::string::npos) line = line.substr(0, sc);
    std::string s = trim(line);
    while (!s.empty()) {
      // leading labels
      size_t i = 0;
      while (i < s.size() && is_ident_char(s[i])) ++i;
      if (i > 0 && i < s.size() && s[i] == ':' && is_ident_start(s[0])) {
        AsmItem item;
        item.kind = ItemKind::Label;
        item.label = s.substr(0, i);
        item.source_line = line_no;
        item.source_text = item.label + ":";
        prog.items.push_back(std::move(item));
        s = trim(s.substr(i + 1));
        continue;
      }
      break;
    }
    if (s.empty()) return;
    size_t sp = s.find_first_of(" \t");
    std::string word = sp == std::string::npos ? s : s.substr(0, sp);
    std::string rest = sp == std::string::npos ? "" : trim(s.substr(sp + 1));
    if (word[0] == '.')
      parse_directive(word, rest, s);
    else
      parse_instruction(word, rest, s);
  }

  void validate() {
    std::map<std::string, int> defined;
    for (const auto& it : prog.items)
      if (it.kind == ItemKind::Label) {
        auto [pos, inserted] = defined.emplace(it.label, it.source_line);
        if (!inserted)
          throw ParseError(it.source_line, "duplicate label '" + it.label +
                                               "' (first defined at line " +
                                               std::to_string(pos->second) + ")");
      }

    auto require = [&](const std::string& sym, int line) {
      if (!sym.empty() && sym != "$" && !defined.count(sym))
        throw ParseError(line, "undefined symbol '" + sym + "'");
    };
    for (const auto& it : prog.items) {
      if (it.kind == ItemKind::Instr) {
        for (const auto& op : it.instr.operands) require(op.symbol, it.source_line);
        require(it.instr.target.symbol, it.source_line);
      } else if (it.kind == ItemKind::Directive) {
        for (const auto& w : it.directive.words) require(w.symbol, it.source_line);
        require(it.directive.vector_label, it.source_line);
        if (it.directive.kind == DirectiveKind::Global) require(it.directive.name, it.source_line);
      }
    }
    if (opts.require_main && defined.count("main") == 0)
      throw ParseError(1, "no 'main' entry label defined");
  }
};

}  // namespace

const char* mnemonic_name(Mnemonic m) {
  switch (m) {
    case Mnemonic::Mov: return "mov";
    case Mnemonic::Add: return "add";
    case Mnemonic::Sub: return "sub";
    case Mnemonic::Cmp: return "cmp";
    case Mnemonic::And: return "and";
    case Mnemonic::Bis: return "bis";
    case Mnemonic::Xor: return "xor";
    case Mnemonic::Bit: return "bit";
    case Mnemonic::Push: return "push";
    case Mnemonic::Pop: return "pop";
    case Mnemonic::Call: return "call";
    case Mnemonic::Swpb: return "swpb";
    case Mnemonic::Rra: return "rra";
    case Mnemonic::Rrc: return "rrc";
    case Mnemonic::Inc: return "inc";
    case Mnemonic::Dec: return "dec";
    case Mnemonic::Jmp: return "jmp";
    case Mnemonic::Jz: return "jz";
    case Mnemonic::Jnz: return "jnz";
    case Mnemonic::Jc: return "jc";
    case Mnemonic::Jnc: return "jnc";
    case Mnemonic::Jn: return "jn";
    case Mnemonic::Jge: return "jge";
    case Mnemonic::Jl: return "jl";
    case Mnemonic::Ret: return "ret";
    case Mnemonic::Reti: return "reti";
  }
  return "?";
}

bool is_two_op(Mnemonic m) { return m >= Mnemonic::Mov && m <= Mnemonic::Bit; }
bool is_one_op(Mnemonic m) { return m >= Mnemonic::Push && m <= Mnemonic::Dec; }
bool is_jump(Mnemonic m) { return m >= Mnemonic::Jmp && m <= Mnemonic::Jl; }

bool AsmProgram::defines_label(const std::string& name) const {
  for (const auto& it : items)
    if (it.kind == ItemKind::Label && it.label == name) return true;
  return false;
}

bool AsmProgram::is_isr_label(const std::string& name) const {
  if (name.rfind(isr_prefix, 0) == 0) return true;
  for (const auto& it : items)
    if (it.kind == ItemKind::Directive && it.directive.kind == DirectiveKind::Vector &&
        it.directive.vector_label == name)
      return true;
  return false;
}

std::vector<std::string> AsmProgram::global_labels() const {
  std::vector<std::string> out;
  for (const auto& it : items)
    if (it.kind == ItemKind::Directive && it.directive.kind == DirectiveKind::Global)
      out.push_back(it.directive.name);
  return out;
}

bool AsmProgram::has_instrumented_marker() const {
  for (const auto& it : items)
    if (it.kind == ItemKind::Directive &&
        it.directive.kind == DirectiveKind::InstrumentedMarker)
      return true;
  return false;
}

AsmProgram parse_asm(const std::string& text, const ParseOptions& opts) {
  Parser p;
  p.opts = opts;
  p.prog.isr_prefix = opts.isr_prefix;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    ++p.line_no;
    p.parse_line(line);
  }
  p.validate();
  return std::move(p.prog);
}

namespace {

std::string value_text(const std::string& symbol, int32_t value, bool hex_plain) {
  std::ostringstream os;
  if (!symbol.empty()) {
    os << symbol;
    if (value > 0) os << "+" << value;
    if (value < 0) os << value;
    return os.str();
  }
  if (hex_plain && value >= 0) {
    os << "0x" << std::hex << value;
    return os.str();
  }
  os << value;
  return os.str();
}

}  // namespace

std::string operand_text(const Operand& op) {
  switch (op.mode) {
    case AddrMode::Register:
      return "r" + std::to_string(op.reg);
    case AddrMode::Indexed:
      return value_text(op.symbol, op.value, false) + "(r" + std::to_string(op.reg) + ")";
    case AddrMode::Absolute:
      return "&" + value_text(op.symbol, op.value, true);
    case AddrMode::Indirect:
      return "@r" + std::to_string(op.reg);
    case AddrMode::IndirectAutoInc:
      return "@r" + std::to_string(op.reg) + "+";
    case AddrMode::Immediate:
      return "#" + value_text(op.symbol, op.value, true);
    case AddrMode::Symbolic:
      return value_text(op.symbol, op.value, true);
  }
  return "?";
}

std::string instruction_text(const Instruction& in) {
  std::ostringstream os;
  os << mnemonic_name(in.mnemonic);
  if (in.byte_suffix) os << ".b";
  if (is_jump(in.mnemonic)) {
    os << " " << (in.target.self() ? std::string("$")
                                   : value_text(in.target.symbol, in.target.addend, true));
    return os.str();
  }
  for (size_t i = 0; i < in.operands.size(); ++i)
    os << (i == 0 ? " " : ", ") << operand_text(in.operands[i]);
  return os.str();
}

std::string serialize(const AsmProgram& prog) {
  std::ostringstream os;
  for (const auto& it : prog.items) {
    switch (it.kind) {
      case ItemKind::Label:
        os << it.label << ":\n";
        break;
      case ItemKind::Instr:
        os << "\t" << instruction_text(it.instr) << "\n";
        break;
      case ItemKind::Directive: {
        const Directive& d = it.directive;
        switch (d.kind) {
          case DirectiveKind::Text: os << "\t.text\n"; break;
          case DirectiveKind::Data: os << "\t.data\n"; break;
          case DirectiveKind::Section: os << "\t.section " << d.name << "\n"; break;
          case DirectiveKind::Global: os << "\t.global " << d.name << "\n"; break;
          case DirectiveKind::Word: {
            os << "\t.word ";
            for (size_t i = 0; i < d.words.size(); ++i)
              os << (i ? ", " : "") << value_text(d.words[i].symbol, d.words[i].value, true);
            os << "\n";
            break;
          }
          case DirectiveKind::Byte: {
            os << "\t.byte ";
            for (size_t i = 0; i < d.bytes.size(); ++i)
              os << (i ? ", " : "") << static_cast<int>(d.bytes[i]);
            os << "\n";
            break;
          }
          case DirectiveKind::Vector:
            os << "\t.vector " << d.vector_id << ", " << d.vector_label << "\n";
            break;
          case DirectiveKind::InstrumentedMarker:
            os << "\t.eilid_instrumented\n";
            break;
        }
        break;
      }
    }
  }
  return os.str();
}

}  // namespace eilid
