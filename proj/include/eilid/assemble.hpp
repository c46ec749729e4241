// Encoding and image construction.
//
// The instruction encoding is repo-defined; only byte lengths follow the real
// sizing rule (2 bytes + 2 per extension word, jumps 2). First word:
//   0 mmm b aa ssss d dddd    two-op: mnemonic, byte flag, src As/reg, dst Ad/reg
//   10 mmmm 00 aa rrrr 0000   one-op
//   110 ccc oooooooooo        jump: condition + signed word offset
//   111 .............         0 = ret, 1 = reti
// Addressing reuses the MSP430 As/Ad trick: symbolic = indexed(r0),
// absolute = indexed(r2), immediate = autoincrement(r0); the parser rejects
// the shadowed raw forms so decoding is unambiguous. Words are little-endian.
#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>

#include "eilid/layout.hpp"

namespace eilid {

struct AssembleError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct MemoryImage {
  std::array<uint8_t, 0x10000> bytes{};
  MemoryLayout layout;
  std::map<std::string, uint16_t> symbols;

  uint16_t read_word(uint16_t addr) const {
    uint16_t a = addr & 0xFFFE;
    return static_cast<uint16_t>(bytes[a] | (bytes[a + 1] << 8));
  }
  void write_word(uint16_t addr, uint16_t v) {
    uint16_t a = addr & 0xFFFE;
    bytes[a] = static_cast<uint8_t>(v & 0xFF);
    bytes[a + 1] = static_cast<uint8_t>(v >> 8);
  }
  std::optional<uint16_t> symbol(const std::string& name) const {
    auto it = symbols.find(name);
    if (it == symbols.end()) return std::nullopt;
    return it->second;
  }
};

using SymbolResolver = std::function<std::optional<uint16_t>(const std::string&)>;

// Up to 3 words. `addr` is the instruction's own address (jump offsets).
std::vector<uint16_t> encode(const Instruction& in, uint16_t addr,
                             const SymbolResolver& resolve);

struct Decoded {
  Instruction instr;
  int size = 0;
};

// Returns nullopt on invalid encodings. Symbolic references come back as
// numeric operands; jump targets as absolute addresses.
std::optional<Decoded> decode(const std::array<uint8_t, 0x10000>& mem, uint16_t addr);

MemoryImage assemble(const AsmProgram& prog, const MemoryLayout& ml);

// Raw 64 KiB image + text sidecar with regions, ports, and symbols.
void save_image(const MemoryImage& img, const std::string& bin_path,
                const std::string& sidecar_path);
MemoryImage load_image(const std::string& bin_path, const std::string& sidecar_path);

}  // namespace eilid
