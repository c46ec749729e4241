#include "eilid/layout.hpp"

#include <iomanip>
#include <sstream>

namespace eilid {

void MemoryLayout::validate() const {
  const Region* regions[] = {&mmio, &dmem, &secure_shadow, &monitor_state,
                             &monitor_rom, &pmem, &ivt};
  for (const Region* r : regions) {
    if (r->lo > r->hi || r->hi > 0xFFFF) throw LayoutError("bad region bounds");
  }
  for (size_t i = 0; i < std::size(regions); ++i)
    for (size_t j = i + 1; j < std::size(regions); ++j) {
      const Region* a = regions[i];
      const Region* b = regions[j];
      if (a->lo <= b->hi && b->lo <= a->hi) throw LayoutError("overlapping regions");
    }
  if (!ivt.contains(reset_vector)) throw LayoutError("reset vector outside ivt");
  if (stack_bytes >= dmem.size()) throw LayoutError("stack band larger than dmem");
}

int instr_size(const Instruction& in) {
  if (is_jump(in.mnemonic)) return 2;
  int ext = 0;
  for (const auto& op : in.operands)
    if (op.has_ext_word()) ++ext;
  return 2 + 2 * ext;
}

int item_size(const AsmItem& item) {
  switch (item.kind) {
    case ItemKind::Instr:
      return instr_size(item.instr);
    case ItemKind::Directive:
      if (item.directive.kind == DirectiveKind::Word)
        return 2 * static_cast<int>(item.directive.words.size());
      if (item.directive.kind == DirectiveKind::Byte)
        return static_cast<int>(item.directive.bytes.size());
      return 0;
    case ItemKind::Label:
      return 0;
  }
  return 0;
}

AddressMap layout(const AsmProgram& prog, const MemoryLayout& ml) {
  ml.validate();
  AddressMap map;
  map.addr.resize(prog.items.size(), 0);

  enum class Sect { Text, Data, Monitor };
  Sect sect = Sect::Text;
  uint32_t text_lc = ml.pmem.lo;
  uint32_t data_lc = ml.dmem.lo;
  uint32_t mon_lc = ml.monitor_rom.lo;

  for (size_t i = 0; i < prog.items.size(); ++i) {
    const AsmItem& it = prog.items[i];
    if (it.kind == ItemKind::Directive) {
      const Directive& d = it.directive;
      if (d.kind == DirectiveKind::Text) sect = Sect::Text;
      if (d.kind == DirectiveKind::Data) sect = Sect::Data;
      if (d.kind == DirectiveKind::Section) {
        if (d.name == "text") sect = Sect::Text;
        else if (d.name == "data") sect = Sect::Data;
        else sect = Sect::Monitor;
      }
    }
    uint32_t& lc = sect == Sect::Text ? text_lc : sect == Sect::Data ? data_lc : mon_lc;
    map.addr[i] = lc;
    int sz = item_size(it);
    if (it.kind == ItemKind::Instr && sect == Sect::Data)
      throw LayoutError("line " + std::to_string(it.source_line) +
                        ": instruction in data section");
    lc += static_cast<uint32_t>(sz);
    const Region& reg = sect == Sect::Text ? ml.pmem
                        : sect == Sect::Data ? ml.dmem
                                             : ml.monitor_rom;
    if (sz > 0 && lc - 1 > reg.hi)
      throw LayoutError("line " + std::to_string(it.source_line) + ": region overflow (" +
                        (sect == Sect::Text ? "pmem" : sect == Sect::Data ? "dmem" : "monitor rom") +
                        ")");
  }
  map.text_end = text_lc;
  map.data_end = data_lc;
  map.monitor_end = mon_lc;
  return map;
}

std::string layout_listing(const AsmProgram& prog, const AddressMap& map) {
  std::ostringstream os;
  for (size_t i = 0; i < prog.items.size(); ++i) {
    const AsmItem& it = prog.items[i];
    os << "0x" << std::hex << std::setw(4) << std::setfill('0') << map.addr[i] << std::dec
       << "\t" << item_size(it) << "\t"
       << (it.source_text.empty()
               ? (it.kind == ItemKind::Instr ? instruction_text(it.instr)
                                             : it.kind == ItemKind::Label ? it.label + ":" : "")
               : it.source_text)
       << "\n";
  }
  return os.str();
}

}  // namespace eilid
