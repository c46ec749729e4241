#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"
#include "eilid/layout.hpp"
#include "test_util.hpp"

using namespace eilid;

namespace {
ParseOptions no_main() {
  ParseOptions o;
  o.require_main = false;
  return o;
}

AsmItem two_byte_nop() {
  AsmItem it;
  it.kind = ItemKind::Instr;
  it.instr =
      Instruction{Mnemonic::Mov, false, {Operand::make_reg(3), Operand::make_reg(3)}, {}};
  return it;
}
}  // namespace

TEST_CASE("empty program lays out to an empty map") {
  AsmProgram prog;
  MemoryLayout ml;
  auto map = layout(prog, ml);
  CHECK(map.addr.empty());
  CHECK(map.text_end == ml.pmem.lo);
}

TEST_CASE("a function at 0x200 moves to 0x210 when 8 two-byte instructions precede it") {
  // pmem rebased to 0x0200 to state the shift in absolute terms
  MemoryLayout ml;
  ml.mmio = {0x0000, 0x00FF};
  ml.dmem = {0x1000, 0x1DFF};
  ml.pmem = {0x0200, 0x0FFF};
  ml.out_port = 0x0080;
  ml.halt_port = 0x0082;
  ml.trigger = 0x0090;

  auto prog = parse_asm("foo:\n\tret\n", no_main());
  auto before = layout(prog, ml);
  CHECK(before.addr[0] == 0x0200);

  AsmProgram grown;
  for (int i = 0; i < 8; ++i) grown.items.push_back(two_byte_nop());
  for (const auto& it : prog.items) grown.items.push_back(it);
  auto after = layout(grown, ml);
  CHECK(after.addr[8] == 0x0210);
}

TEST_CASE("layout equals an independent size-summing re-walk") {
  auto text = read_file(std::string(EILID_GOLDEN_DIR) + "/sample_app.s");
  auto prog = parse_asm(text);
  MemoryLayout ml;
  auto map = layout(prog, ml);

  // brute-force oracle: re-derive every address by accumulating sizes, with
  // its own sizing arithmetic rather than instr_size()
  uint32_t text_lc = ml.pmem.lo, data_lc = ml.dmem.lo, mon_lc = ml.monitor_rom.lo;
  int section = 0;  // 0 text, 1 data, 2 monitor
  for (size_t i = 0; i < prog.items.size(); ++i) {
    const AsmItem& it = prog.items[i];
    if (it.kind == ItemKind::Directive) {
      if (it.directive.kind == DirectiveKind::Text) section = 0;
      if (it.directive.kind == DirectiveKind::Data) section = 1;
      if (it.directive.kind == DirectiveKind::Section)
        section = it.directive.name == "text" ? 0 : it.directive.name == "data" ? 1 : 2;
    }
    uint32_t& lc = section == 0 ? text_lc : section == 1 ? data_lc : mon_lc;
    CHECK(map.addr[i] == lc);
    if (it.kind == ItemKind::Instr) {
      const Instruction& in = it.instr;
      if (is_jump(in.mnemonic)) {
        lc += 2;
      } else {
        int words = 1;
        for (const auto& op : in.operands)
          if (op.mode == AddrMode::Immediate || op.mode == AddrMode::Absolute ||
              op.mode == AddrMode::Indexed || op.mode == AddrMode::Symbolic)
            ++words;
        lc += 2 * static_cast<uint32_t>(words);
      }
    } else if (it.kind == ItemKind::Directive) {
      if (it.directive.kind == DirectiveKind::Word)
        lc += 2 * static_cast<uint32_t>(it.directive.words.size());
      if (it.directive.kind == DirectiveKind::Byte)
        lc += static_cast<uint32_t>(it.directive.bytes.size());
    }
  }
  CHECK(map.text_end == text_lc);
  CHECK(map.data_end == data_lc);
}

TEST_CASE("layout monotonicity: an insertion shifts only items at or above it") {
  auto prog = parse_asm("a:\n\tret\nb:\n\tret\nc:\n\tret\n", no_main());
  MemoryLayout ml;
  auto before = layout(prog, ml);

  AsmProgram grown;
  grown.items.push_back(prog.items[0]);
  grown.items.push_back(prog.items[1]);
  grown.items.push_back(two_byte_nop());  // inserted before label b
  for (size_t i = 2; i < prog.items.size(); ++i) grown.items.push_back(prog.items[i]);
  auto after = layout(grown, ml);

  CHECK(after.addr[0] == before.addr[0]);
  CHECK(after.addr[1] == before.addr[1]);
  for (size_t i = 2; i < prog.items.size(); ++i) CHECK(after.addr[i + 1] == before.addr[i] + 2);
}

TEST_CASE("region overflow reported") {
  MemoryLayout ml;
  ml.pmem = {0xE000, 0xE003};
  std::string text = "\tret\n\tret\n\tret\n";
  auto prog = parse_asm(text, no_main());
  CHECK_THROWS_AS(layout(prog, ml), LayoutError);
}

TEST_CASE("overlapping regions rejected") {
  MemoryLayout ml;
  ml.dmem = {0x0200, 0x2FFF};  // collides with the shadow region
  AsmProgram prog;
  CHECK_THROWS_AS(layout(prog, ml), LayoutError);
}

TEST_CASE("listing has one ADDRESS/SIZE/SOURCE line per item") {
  auto prog = parse_asm("main:\n\tmov #1, r15\n\tjmp $\n");
  MemoryLayout ml;
  auto map = layout(prog, ml);
  auto listing = layout_listing(prog, map);
  CHECK(listing ==
        "0xe000\t0\tmain:\n"
        "0xe000\t4\tmov #1, r15\n"
        "0xe004\t2\tjmp $\n");
}
