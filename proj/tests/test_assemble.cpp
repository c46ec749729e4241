#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"
#include "eilid/assemble.hpp"
#include "test_util.hpp"

#include <filesystem>

using namespace eilid;

namespace {
ParseOptions no_main() {
  ParseOptions o;
  o.require_main = false;
  return o;
}

std::vector<Operand> source_operands() {
  return {
      Operand::make_reg(9),
      Operand::make_indexed(0x0012, 10),
      Operand::make_abs(0x0200),
      {AddrMode::Symbolic, 0, 0x0204, {}},
      Operand::make_indirect(11),
      Operand::make_autoinc(12),
      Operand::make_imm(0x1234),
  };
}

std::vector<Operand> dest_operands() {
  return {
      Operand::make_reg(13),
      Operand::make_indexed(0x0006, 14),
      Operand::make_abs(0x0208),
      {AddrMode::Symbolic, 0, 0x020C, {}},
  };
}

SymbolResolver no_symbols() {
  return [](const std::string&) { return std::optional<uint16_t>{}; };
}

void check_roundtrip(const Instruction& in, uint16_t addr) {
  auto words = encode(in, addr, no_symbols());
  std::array<uint8_t, 0x10000> mem{};
  for (size_t k = 0; k < words.size(); ++k) {
    mem[addr + 2 * k] = static_cast<uint8_t>(words[k] & 0xFF);
    mem[addr + 2 * k + 1] = static_cast<uint8_t>(words[k] >> 8);
  }
  auto dec = decode(mem, addr);
  REQUIRE_MESSAGE(dec.has_value(), instruction_text(in));
  CHECK_MESSAGE(dec->instr == in, instruction_text(in), " != ", instruction_text(dec->instr));
  CHECK(dec->size == 2 * static_cast<int>(words.size()));
  CHECK(dec->size == instr_size(in));
}
}  // namespace

TEST_CASE("decode(encode(instr)) is the identity over the mnemonic/mode product") {
  uint16_t addr = 0xE000;
  for (Mnemonic m : {Mnemonic::Mov, Mnemonic::Add, Mnemonic::Sub, Mnemonic::Cmp, Mnemonic::And,
                     Mnemonic::Bis, Mnemonic::Xor, Mnemonic::Bit}) {
    for (const auto& src : source_operands())
      for (const auto& dst : dest_operands())
        check_roundtrip(Instruction{m, false, {src, dst}, {}}, addr);
  }
  for (const auto& src : source_operands()) {
    for (const auto& dst : dest_operands()) {
      check_roundtrip(Instruction{Mnemonic::Mov, true, {src, dst}, {}}, addr);
      check_roundtrip(Instruction{Mnemonic::Cmp, true, {src, dst}, {}}, addr);
    }
  }
  for (Mnemonic m : {Mnemonic::Push, Mnemonic::Call})
    for (const auto& op : source_operands())
      check_roundtrip(Instruction{m, false, {op}, {}}, addr);
  for (Mnemonic m : {Mnemonic::Pop, Mnemonic::Swpb, Mnemonic::Rra, Mnemonic::Rrc, Mnemonic::Inc,
                     Mnemonic::Dec})
    for (const auto& op : dest_operands())
      check_roundtrip(Instruction{m, false, {op}, {}}, addr);
  for (Mnemonic m : {Mnemonic::Jmp, Mnemonic::Jz, Mnemonic::Jnz, Mnemonic::Jc, Mnemonic::Jnc,
                     Mnemonic::Jn, Mnemonic::Jge, Mnemonic::Jl}) {
    for (int32_t target : {0xE000, 0xE002, 0xE100, 0xDC06})
      check_roundtrip(Instruction{m, false, {}, JumpTarget{"", target}}, addr);
  }
  check_roundtrip(Instruction{Mnemonic::Ret, false, {}, {}}, addr);
  check_roundtrip(Instruction{Mnemonic::Reti, false, {}, {}}, addr);
}

TEST_CASE("reset vector points at main when only main exists") {
  auto img = assemble(parse_asm("main:\n\tjmp $\n"), MemoryLayout{});
  CHECK(img.read_word(0xFFFE) == img.symbols.at("main"));
}

TEST_CASE("reset vector prefers a boot stub") {
  auto img = assemble(parse_asm("__boot:\n\tmov #0x1000, r1\n\tjmp main\nmain:\n\tjmp $\n"),
                      MemoryLayout{});
  CHECK(img.read_word(0xFFFE) == img.symbols.at("__boot"));
  CHECK(img.symbols.at("__boot") == 0xE000);
}

TEST_CASE("one inserted 2-byte instruction shifts later symbols by exactly 2") {
  std::string base = "main:\n\tjmp $\nfoo:\n\tret\nbar:\n\tret\n";
  std::string grown = "main:\n\tmov r3, r3\n\tjmp $\nfoo:\n\tret\nbar:\n\tret\n";
  MemoryLayout ml;
  auto a = assemble(parse_asm(base), ml);
  auto b = assemble(parse_asm(grown), ml);
  CHECK(b.symbols.at("foo") == a.symbols.at("foo") + 2);
  CHECK(b.symbols.at("bar") == a.symbols.at("bar") + 2);
  CHECK(b.symbols.at("main") == a.symbols.at("main"));
}

TEST_CASE("identical text assembles to byte-identical images") {
  auto text = read_file(std::string(EILID_GOLDEN_DIR) + "/sample_app.s");
  MemoryLayout ml;
  auto a = assemble(parse_asm(text), ml);
  auto b = assemble(parse_asm(text), ml);
  CHECK(a.bytes == b.bytes);
}

TEST_CASE("vectors land in the ivt and data lands in dmem") {
  auto text = read_file(std::string(EILID_GOLDEN_DIR) + "/sample_app.s");
  MemoryLayout ml;
  auto img = assemble(parse_asm(text), ml);
  CHECK(img.read_word(0xFFE2) == img.symbols.at("__isr_timer"));
  CHECK(img.read_word(0xFFE4) == img.symbols.at("__isr_adc"));
  CHECK(img.read_word(img.symbols.at("samples")) == 0x0011);
  CHECK(img.read_word(img.symbols.at("samples") + 2) == 0x0040);
}

TEST_CASE("an isr-prefixed label with no vector binding is an error") {
  auto prog = parse_asm("main:\n\tjmp $\n__isr_orphan:\n\treti\n");
  CHECK_THROWS_AS(assemble(prog, MemoryLayout{}), AssembleError);
}

TEST_CASE("unresolved symbols are reported") {
  AsmProgram prog;
  AsmItem label;
  label.kind = ItemKind::Label;
  label.label = "main";
  prog.items.push_back(label);
  AsmItem call;
  call.kind = ItemKind::Instr;
  call.instr = Instruction{Mnemonic::Call, false, {Operand::make_imm(0, "ghost")}, {}};
  prog.items.push_back(call);
  CHECK_THROWS_AS(assemble(prog, MemoryLayout{}), AssembleError);
}

TEST_CASE("jump offsets out of range are rejected") {
  std::ostringstream os;
  os << "main:\n";
  for (int i = 0; i < 600; ++i) os << "\tmov r3, r3\n";
  os << "\tjmp main\n";
  CHECK_THROWS_AS(assemble(parse_asm(os.str()), MemoryLayout{}), AssembleError);
}

TEST_CASE("image save/load round-trip") {
  auto text = read_file(std::string(EILID_GOLDEN_DIR) + "/sample_app.s");
  MemoryLayout ml;
  auto img = assemble(parse_asm(text), ml);
  auto dir = std::filesystem::temp_directory_path() / "eilid_img_test";
  std::filesystem::create_directories(dir);
  auto bin = (dir / "app.bin").string();
  save_image(img, bin, bin + ".sym");
  auto back = load_image(bin, bin + ".sym");
  CHECK(back.bytes == img.bytes);
  CHECK(back.symbols == img.symbols);
  CHECK(back.layout.pmem.lo == img.layout.pmem.lo);
  CHECK(back.layout.trigger == img.layout.trigger);
}
