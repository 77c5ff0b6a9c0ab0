#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace sigvol {

// A word over the two-letter alphabet {1, 2}. Letter 1 indexes the time
// coordinate of the extended path, letter 2 the Brownian coordinate.
//
// Packed representation: bit k of `bits` holds letter (value - 1) of the
// (length - 1 - k)-th position, i.e. the first letter sits in the highest
// used bit. With that packing, `bits` is also the lexicographic rank of the
// word within its level, so dense per-level tables can be indexed directly.
class Word {
public:
  static constexpr int kMaxLength = 62;

  constexpr Word() = default;

  constexpr Word(std::uint64_t bits, int length) : bits_(bits), length_(length) {
    if (length < 0 || length > kMaxLength)
      throw std::invalid_argument("Word: length out of range");
    if (length < 64 && (bits >> length) != 0)
      throw std::invalid_argument("Word: stray bits beyond length");
  }

  // Parse a digit string such as "211"; "" is the empty word.
  static Word from_digits(const std::string& digits) {
    Word w;
    for (char c : digits) {
      if (c != '1' && c != '2') throw std::invalid_argument("Word: letters must be 1 or 2");
      w = w.append(c - '0');
    }
    return w;
  }

  constexpr int length() const { return length_; }
  constexpr bool empty() const { return length_ == 0; }
  constexpr std::uint64_t bits() const { return bits_; }

  // letter at position i, 0-based from the front; returns 1 or 2
  constexpr int letter(int i) const {
    return static_cast<int>((bits_ >> (length_ - 1 - i)) & 1u) + 1;
  }

  constexpr int last_letter() const { return static_cast<int>(bits_ & 1u) + 1; }
  constexpr Word drop_last() const { return Word(bits_ >> 1, length_ - 1); }

  constexpr Word append(int letter) const {
    if (letter != 1 && letter != 2) throw std::invalid_argument("Word: letter must be 1 or 2");
    if (length_ >= kMaxLength) throw std::invalid_argument("Word: too long");
    return Word((bits_ << 1) | static_cast<std::uint64_t>(letter - 1), length_ + 1);
  }

  // w = (*this)·rhs, concatenation
  constexpr Word concat(const Word& rhs) const {
    if (length_ + rhs.length_ > kMaxLength) throw std::invalid_argument("Word: too long");
    return Word((bits_ << rhs.length_) | rhs.bits_, length_ + rhs.length_);
  }

  std::string to_string() const {
    if (length_ == 0) return "∅";  // ∅
    std::string s(static_cast<std::size_t>(length_), '1');
    for (int i = 0; i < length_; ++i) s[static_cast<std::size_t>(i)] = static_cast<char>('0' + letter(i));
    return s;
  }

  // canonical enumeration order: by length, then lexicographic
  friend constexpr bool operator<(const Word& a, const Word& b) {
    if (a.length_ != b.length_) return a.length_ < b.length_;
    return a.bits_ < b.bits_;
  }
  friend constexpr bool operator==(const Word& a, const Word& b) {
    return a.length_ == b.length_ && a.bits_ == b.bits_;
  }

private:
  std::uint64_t bits_ = 0;
  int length_ = 0;
};

}  // namespace sigvol
