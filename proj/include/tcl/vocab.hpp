#pragma once

// Character/word symbol table. Ids 0..2 are reserved control tokens; every
// other id maps one-to-one to a text fragment. Encoding is greedy
// longest-match over the fragment set, with a lowercase fallback for
// characters that only exist in lowercase form.

#include <string>
#include <unordered_map>
#include <vector>

namespace tcl {

class Vocabulary {
 public:
  static constexpr int kBos = 0;
  static constexpr int kEos = 1;
  static constexpr int kPad = 2;
  static constexpr int kMaxSize = 128;

  Vocabulary();

  // Returns the symbol's id, inserting it if new. Reserved spellings and the
  // 128-entry cap are enforced.
  int add_symbol(const std::string& s);
  int id_of(const std::string& s) const;  // -1 when absent
  const std::string& symbol(int id) const;
  int size() const { return static_cast<int>(symbols_.size()); }
  static bool is_reserved(int id) { return id >= 0 && id <= kPad; }

  std::vector<int> encode(const std::string& text) const;
  // Concatenates symbols; reserved ids contribute nothing.
  std::string decode(const std::vector<int>& ids) const;

  // One symbol per line, line number = id. Newline, space, and backslash
  // are escaped as \n, \s, \\ so the file stays line-oriented.
  void save(const std::string& path) const;
  static Vocabulary load(const std::string& path);

 private:
  std::vector<std::string> symbols_;
  std::unordered_map<std::string, int> index_;
  size_t max_symbol_len_ = 0;  // over non-reserved symbols
};

}  // namespace tcl
