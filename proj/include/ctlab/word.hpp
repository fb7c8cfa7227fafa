#pragma once

#include <cassert>
#include <compare>
#include <cstdint>
#include <string>

namespace ctlab {

// Machine word of configurable width (8, 16 or 32 bits, default 32).
// All arithmetic wraps modulo 2^bits. Comparisons are unsigned except lts.
// Division and remainder are total: x/0 = 2^bits-1, x%0 = x (RISC-V
// convention). Shift amounts are masked to log2(bits) bits.
class Word {
 public:
  constexpr Word() = default;

  static constexpr Word of(uint64_t value, unsigned bits = 32) {
    Word w;
    w.bits_ = static_cast<uint8_t>(bits);
    w.value_ = static_cast<uint32_t>(value) & mask(bits);
    return w;
  }

  constexpr uint32_t value() const { return value_; }
  constexpr unsigned bits() const { return bits_; }
  constexpr unsigned bytes() const { return bits_ / 8u; }

  static constexpr uint32_t mask(unsigned bits) {
    return bits >= 32 ? 0xFFFFFFFFu : ((1u << bits) - 1u);
  }

  constexpr int32_t as_signed() const {
    uint32_t sign = 1u << (bits_ - 1);
    return static_cast<int32_t>((value_ ^ sign)) - static_cast<int32_t>(sign);
  }

  friend constexpr bool operator==(Word a, Word b) {
    return a.value_ == b.value_ && a.bits_ == b.bits_;
  }
  friend constexpr auto operator<=>(Word a, Word b) {
    if (auto c = a.bits_ <=> b.bits_; c != 0) return c;
    return a.value_ <=> b.value_;
  }

  constexpr Word add(Word o) const { return bin(uint64_t(value_) + o.value_, o); }
  constexpr Word sub(Word o) const { return bin(uint64_t(value_) - o.value_, o); }
  constexpr Word mul(Word o) const { return bin(uint64_t(value_) * o.value_, o); }
  constexpr Word divu(Word o) const {
    return bin(o.value_ == 0 ? mask(bits_) : value_ / o.value_, o);
  }
  constexpr Word remu(Word o) const {
    return bin(o.value_ == 0 ? value_ : value_ % o.value_, o);
  }
  constexpr Word band(Word o) const { return bin(value_ & o.value_, o); }
  constexpr Word bor(Word o) const { return bin(value_ | o.value_, o); }
  constexpr Word bxor(Word o) const { return bin(value_ ^ o.value_, o); }
  constexpr Word shl(Word o) const {
    return bin(uint64_t(value_) << (o.value_ & (bits_ - 1u)), o);
  }
  constexpr Word shr(Word o) const {
    return bin(uint64_t(value_) >> (o.value_ & (bits_ - 1u)), o);
  }
  constexpr Word eq(Word o) const { return flag(value_ == o.value_); }
  constexpr Word ne(Word o) const { return flag(value_ != o.value_); }
  constexpr Word ltu(Word o) const { return flag(value_ < o.value_); }
  constexpr Word lts(Word o) const { return flag(as_signed() < o.as_signed()); }

  constexpr bool truthy() const { return value_ != 0; }

  std::string str() const { return std::to_string(value_); }

 private:
  constexpr Word bin(uint64_t raw, Word o) const {
    assert(bits_ == o.bits_);
    return of(raw, bits_);
  }
  constexpr Word flag(bool b) const { return of(b ? 1 : 0, bits_); }

  uint32_t value_ = 0;
  uint8_t bits_ = 32;
};

}  // namespace ctlab
