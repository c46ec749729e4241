// MSP430-subset assembly: data model and parser.
//
// Accepted source (GAS-flavored):
//   label:            labels, one or more per line, instruction may follow
//   \tmnemonic ops    operands comma-separated; ';' starts a comment
//   .text .data .section <name> .global <sym> .word v,... .byte v,...
//   .vector <id>, <label>      bind IVT slot <id> (0..14) to an ISR label
//   .eilid_instrumented        marker emitted by the instrumenter
//
// Operands: rN/pc/sp/sr, #imm, #sym+off, &addr, &sym, @rN, @rN+, off(rN),
// sym(rN), bare sym (memory reference at the symbol's address). Jump targets
// are a label, a number, or '$' (self). Numbers: decimal, 0x.., 0b.., negative.
#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace eilid {

inline constexpr uint8_t kRegPc = 0;
inline constexpr uint8_t kRegSp = 1;
inline constexpr uint8_t kRegSr = 2;
inline constexpr uint8_t kRegCg = 3;

// r4..r7 are reserved for the CFI toolchain (selector, shadow index, args).
inline constexpr uint8_t kReservedRegLo = 4;
inline constexpr uint8_t kReservedRegHi = 7;

enum class Mnemonic {
  // two-operand
  Mov, Add, Sub, Cmp, And, Bis, Xor, Bit,
  // one-operand
  Push, Pop, Call, Swpb, Rra, Rrc, Inc, Dec,
  // jumps
  Jmp, Jz, Jnz, Jc, Jnc, Jn, Jge, Jl,
  // returns
  Ret, Reti,
};

const char* mnemonic_name(Mnemonic m);
bool is_two_op(Mnemonic m);
bool is_one_op(Mnemonic m);
bool is_jump(Mnemonic m);

enum class AddrMode {
  Register,         // rN
  Indexed,          // X(rN)
  Absolute,         // &X
  Indirect,         // @rN
  IndirectAutoInc,  // @rN+
  Immediate,        // #X
  Symbolic,         // X  (memory at address X)
};

// A value field is `value` plus an optional `symbol`; when the symbol is
// non-empty the resolved value is address(symbol) + value.
struct Operand {
  AddrMode mode = AddrMode::Register;
  uint8_t reg = 0;
  int32_t value = 0;
  std::string symbol;

  bool has_ext_word() const {
    return mode == AddrMode::Indexed || mode == AddrMode::Absolute ||
           mode == AddrMode::Immediate || mode == AddrMode::Symbolic;
  }

  static Operand make_reg(uint8_t r) { return {AddrMode::Register, r, 0, {}}; }
  static Operand make_imm(int32_t v, std::string sym = {}) {
    return {AddrMode::Immediate, 0, v, std::move(sym)};
  }
  static Operand make_abs(int32_t v, std::string sym = {}) {
    return {AddrMode::Absolute, 0, v, std::move(sym)};
  }
  static Operand make_sym(std::string sym, int32_t addend = 0) {
    return {AddrMode::Symbolic, 0, addend, std::move(sym)};
  }
  static Operand make_indexed(int32_t off, uint8_t r, std::string sym = {}) {
    return {AddrMode::Indexed, r, off, std::move(sym)};
  }
  static Operand make_indirect(uint8_t r) { return {AddrMode::Indirect, r, 0, {}}; }
  static Operand make_autoinc(uint8_t r) { return {AddrMode::IndirectAutoInc, r, 0, {}}; }

  bool operator==(const Operand&) const = default;
};

// Jump targets: symbol (possibly "$" for self) + addend, or plain numeric
// address when the symbol is empty.
struct JumpTarget {
  std::string symbol;
  int32_t addend = 0;
  bool self() const { return symbol == "$"; }
  bool operator==(const JumpTarget&) const = default;
};

struct Instruction {
  Mnemonic mnemonic = Mnemonic::Mov;
  bool byte_suffix = false;
  std::vector<Operand> operands;  // 0..2; jumps keep the target separately
  JumpTarget target;

  bool operator==(const Instruction&) const = default;
};

enum class DirectiveKind {
  Text, Data, Section, Global, Word, Byte, Vector, InstrumentedMarker,
};

struct WordValue {
  std::string symbol;  // empty for plain numbers
  int32_t value = 0;   // addend when symbol set
  bool operator==(const WordValue&) const = default;
};

struct Directive {
  DirectiveKind kind = DirectiveKind::Text;
  std::string name;               // Section/Global argument
  std::vector<WordValue> words;   // Word arguments
  std::vector<uint8_t> bytes;     // Byte arguments
  int vector_id = -1;             // Vector slot
  std::string vector_label;
  bool operator==(const Directive&) const = default;
};

enum class ItemKind { Label, Instr, Directive };

// Origin distinguishes user code from tool-inserted code; it never survives
// serialization (the instrumented-marker directive is what round-trips).
enum class Origin { Original, Instrumented, Monitor };

struct AsmItem {
  ItemKind kind = ItemKind::Instr;
  std::string label;
  Instruction instr;
  Directive directive;
  Origin origin = Origin::Original;
  int template_id = 0;  // 1..6 for inserted template items
  int source_line = 0;
  std::string source_text;
};

struct AsmProgram {
  std::vector<AsmItem> items;
  std::string isr_prefix = "__isr_";

  bool defines_label(const std::string& name) const;
  // Labels bound by .vector directives (ISR bodies) plus prefix matches.
  bool is_isr_label(const std::string& name) const;
  std::vector<std::string> global_labels() const;
  bool has_instrumented_marker() const;
};

struct ParseError : std::runtime_error {
  int line;
  ParseError(int line_, const std::string& msg)
      : std::runtime_error("line " + std::to_string(line_) + ": " + msg), line(line_) {}
};

struct ParseOptions {
  std::string isr_prefix = "__isr_";
  bool require_main = true;
};

AsmProgram parse_asm(const std::string& text, const ParseOptions& opts = {});

// Emits text that parse_asm accepts back; labels on their own lines.
std::string serialize(const AsmProgram& prog);

std::string operand_text(const Operand& op);
std::string instruction_text(const Instruction& in);

}  // namespace eilid
