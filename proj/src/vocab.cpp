#include "tcl/vocab.hpp"

#include <cctype>
#include <fstream>

#include "tcl/common.hpp"

namespace tcl {

Vocabulary::Vocabulary() {
  symbols_ = {"<bos>", "<eos>", "<pad>"};
  for (int i = 0; i < 3; ++i) index_[symbols_[i]] = i;
}

int Vocabulary::add_symbol(const std::string& s) {
  check(!s.empty(), "vocab: empty symbol");
  auto it = index_.find(s);
  if (it != index_.end()) {
    check(!is_reserved(it->second), "vocab: reserved spelling");
    return it->second;
  }
  check(size() < kMaxSize, "vocab: symbol table is full");
  const int id = size();
  symbols_.push_back(s);
  index_[s] = id;
  if (s.size() > max_symbol_len_) max_symbol_len_ = s.size();
  return id;
}

int Vocabulary::id_of(const std::string& s) const {
  auto it = index_.find(s);
  return it == index_.end() ? -1 : it->second;
}

const std::string& Vocabulary::symbol(int id) const {
  check(id >= 0 && id < size(), "vocab: id out of range");
  return symbols_[id];
}

std::vector<int> Vocabulary::encode(const std::string& text) const {
  std::vector<int> out;
  size_t i = 0;
  std::string probe;
  while (i < text.size()) {
    int hit = -1;
    size_t len = std::min(max_symbol_len_, text.size() - i);
    for (; len >= 1; --len) {
      probe.assign(text, i, len);
      auto it = index_.find(probe);
      if (it != index_.end() && !is_reserved(it->second)) {
        hit = it->second;
        break;
      }
    }
    if (hit < 0 && std::isupper(static_cast<unsigned char>(text[i]))) {
      probe.assign(1, static_cast<char>(std::tolower(
                          static_cast<unsigned char>(text[i]))));
      auto it = index_.find(probe);
      if (it != index_.end() && !is_reserved(it->second)) {
        hit = it->second;
        len = 1;
      }
    }
    check(hit >= 0, "vocab: unencodable text at \"" + text.substr(i, 8) + "\"");
    out.push_back(hit);
    i += len;
  }
  return out;
}

std::string Vocabulary::decode(const std::vector<int>& ids) const {
  std::string out;
  for (int id : ids) {
    check(id >= 0 && id < size(), "vocab: id out of range");
    if (!is_reserved(id)) out += symbols_[id];
  }
  return out;
}

static std::string escape_symbol(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '\\')
      out += "\\\\";
    else if (c == '\n')
      out += "\\n";
    else if (c == ' ')
      out += "\\s";
    else
      out += c;
  }
  return out;
}

static std::string unescape_symbol(const std::string& s, int line_no) {
  std::string out;
  for (size_t i = 0; i < s.size(); ++i) {
    if (s[i] != '\\') {
      out += s[i];
      continue;
    }
    check(i + 1 < s.size(), "vocab: dangling escape on line " +
                                std::to_string(line_no));
    const char c = s[++i];
    if (c == '\\')
      out += '\\';
    else if (c == 'n')
      out += '\n';
    else if (c == 's')
      out += ' ';
    else
      throw IoError("vocab: unknown escape \\" + std::string(1, c) +
                    " on line " + std::to_string(line_no));
  }
  return out;
}

void Vocabulary::save(const std::string& path) const {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("vocab: cannot open " + path + " for writing");
  for (const auto& s : symbols_) f << escape_symbol(s) << '\n';
  f.flush();
  if (!f) throw IoError("vocab: write failed for " + path);
}

Vocabulary Vocabulary::load(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("vocab: cannot open " + path);
  Vocabulary v;
  std::string line;
  int line_no = 0;
  while (std::getline(f, line)) {
    ++line_no;
    const std::string sym = unescape_symbol(line, line_no);
    if (line_no <= 3) {
      check(sym == v.symbols_[line_no - 1],
            "vocab: reserved symbol mismatch on line " + std::to_string(line_no));
      continue;
    }
    const int id = v.add_symbol(sym);
    check(id == line_no - 1, "vocab: duplicate symbol on line " +
                                 std::to_string(line_no));
  }
  check(v.size() > 3, "vocab: file has no symbols beyond the reserved ids");
  return v;
}

}  // namespace tcl
