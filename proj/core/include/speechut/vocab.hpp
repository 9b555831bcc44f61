#pragma once

#include <string>
#include <vector>

#include "speechut/common.hpp"

namespace speechut {

// Character-level text vocabulary: 'a'..'z', space, then BOS/EOS/UNK.
// The CTC blank is not a vocabulary entry; CTC heads emit size()+1 classes
// with blank at index size().
class TextVocab {
 public:
  static constexpr int kChars = 27;  // a-z + space

  int size() const { return kChars + 3; }
  int bos() const { return kChars; }
  int eos() const { return kChars + 1; }
  int unk() const { return kChars + 2; }
  int blank() const { return size(); }  // CTC-head index, one past the vocab

  int encode_char(char c) const {
    if (c >= 'a' && c <= 'z') return c - 'a';
    if (c >= 'A' && c <= 'Z') return c - 'A';
    if (c == ' ') return 26;
    return unk();
  }

  std::vector<int> encode(const std::string& text) const {
    std::vector<int> out;
    out.reserve(text.size());
    for (char c : text) out.push_back(encode_char(c));
    return out;
  }

  std::string decode(const std::vector<int>& ids) const {
    std::string out;
    for (int id : ids) {
      if (id >= 0 && id < 26) out.push_back(static_cast<char>('a' + id));
      else if (id == 26) out.push_back(' ');
      else if (id == unk()) out.push_back('?');
      // BOS/EOS dropped
    }
    return out;
  }
};

}  // namespace speechut
