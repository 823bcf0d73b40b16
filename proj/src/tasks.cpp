#include "tcl/tasks.hpp"

#include <array>
#include <cmath>
#include <fstream>
#include <iostream>
#include <regex>

#include "json.hpp"
#include "tcl/common.hpp"

namespace tcl {

namespace {

long long uniform_in(std::mt19937_64& rng, long long lo, long long hi) {
  return lo + static_cast<long long>(rng() % static_cast<uint64_t>(hi - lo + 1));
}

long long operand_range_lo(int digits) {
  long long p = 1;
  for (int i = 1; i < digits; ++i) p *= 10;
  return p + 1;  // 2, 11, 101
}

long long operand_range_hi(int digits) {
  long long p = 1;
  for (int i = 0; i < digits; ++i) p *= 10;
  return p - 1;  // 9, 99, 999
}

int digit_count(long long v) {
  int d = 1;
  while (v >= 10) {
    v /= 10;
    ++d;
  }
  return d;
}

}  // namespace

Problem make_multiplication(long long a, long long b) {
  Problem p;
  p.prompt = "System: You are a helpful AI assistant.\nUser: What's " +
             std::to_string(a) + " multiplied by " + std::to_string(b) +
             "? Don't use a calculator.\nAssistant: Let's break this problem "
             "down step by step.";
  p.answer = a * b;
  p.task = "mult-" + std::to_string(digit_count(a)) + "x" +
           std::to_string(digit_count(b));
  return p;
}

Problem gen_multiplication(std::mt19937_64& rng, int digits_a, int digits_b) {
  check(digits_a >= 1 && digits_a <= 3 && digits_b >= 1 && digits_b <= 3,
        "gen_multiplication: digit counts must be in [1, 3]");
  const long long a =
      uniform_in(rng, operand_range_lo(digits_a), operand_range_hi(digits_a));
  const long long b =
      uniform_in(rng, operand_range_lo(digits_b), operand_range_hi(digits_b));
  return make_multiplication(a, b);
}

namespace {

const std::array<const char*, 6> kNames = {"Tom",  "Sara", "Ben",
                                           "Lily", "Max",  "Ana"};
const std::array<const char*, 6> kItems = {"apples",  "pens",   "books",
                                           "marbles", "coins",  "cards"};
constexpr int kStoryLo = 2, kStoryHi = 12;

}  // namespace

Problem make_word_problem(StoryKind kind, int name_idx, int item_idx, int n,
                          int m) {
  check(name_idx >= 0 && name_idx < static_cast<int>(kNames.size()),
        "word problem: name index out of range");
  check(item_idx >= 0 && item_idx < static_cast<int>(kItems.size()),
        "word problem: item index out of range");
  check(n >= kStoryLo && n <= kStoryHi && m >= kStoryLo && m <= kStoryHi,
        "word problem: numbers out of range");
  const std::string name = kNames[name_idx];
  const std::string item = kItems[item_idx];
  std::string story;
  long long answer = 0;
  switch (kind) {
    case StoryKind::add:
      story = name + " has " + std::to_string(n) + " " + item + " and buys " +
              std::to_string(m) + " more. How many " + item + " does " + name +
              " have now?";
      answer = n + m;
      break;
    case StoryKind::subtract: {
      const int big = std::max(n, m), small = std::min(n, m);
      story = name + " has " + std::to_string(big) + " " + item +
              " and gives away " + std::to_string(small) + ". How many " +
              item + " are left?";
      answer = big - small;
      break;
    }
    case StoryKind::multiply:
      story = "There are " + std::to_string(n) + " boxes with " +
              std::to_string(m) + " " + item + " in each box. How many " +
              item + " are there in total?";
      answer = static_cast<long long>(n) * m;
      break;
    case StoryKind::divide:
      // the dividend is built as a product, so division is always exact
      story = name + " shares " + std::to_string(n * m) + " " + item +
              " equally among " + std::to_string(m) + " friends. How many " +
              item + " does each friend get?";
      answer = n;
      break;
  }
  Problem p;
  p.prompt = "Problem: " + story + "\nAnswer:";
  p.answer = answer;
  p.task = "wordprob";
  return p;
}

Problem gen_word_problem(std::mt19937_64& rng) {
  const auto kind = static_cast<StoryKind>(rng() % 4);
  const int name_idx = static_cast<int>(rng() % kNames.size());
  const int item_idx = static_cast<int>(rng() % kItems.size());
  const int n = static_cast<int>(uniform_in(rng, kStoryLo, kStoryHi));
  const int m = static_cast<int>(uniform_in(rng, kStoryLo, kStoryHi));
  return make_word_problem(kind, name_idx, item_idx, n, m);
}

std::vector<Problem> load_svamp(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("svamp: cannot open " + path);
  nlohmann::json doc;
  try {
    f >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("svamp: " + path + " is not valid structured text: " +
                  e.what());
  }
  if (!doc.is_array()) throw IoError("svamp: top-level value must be an array");
  std::vector<Problem> out;
  for (size_t i = 0; i < doc.size(); ++i) {
    const auto& rec = doc[i];
    const std::string where = "svamp: record " + std::to_string(i);
    if (!rec.is_object() || !rec.contains("Body") || !rec.contains("Question") ||
        !rec.contains("Answer"))
      throw IoError(where + ": missing Body, Question, or Answer");
    if (!rec["Body"].is_string() || !rec["Question"].is_string() ||
        !rec["Answer"].is_number())
      throw IoError(where + ": field has the wrong type");
    const double ans = rec["Answer"].get<double>();
    if (std::floor(ans) != ans) {
      std::cerr << where << ": skipping non-integer answer " << ans << "\n";
      continue;
    }
    Problem p;
    p.prompt = "Problem: " + rec["Body"].get<std::string>() + " " +
               rec["Question"].get<std::string>() + "\nAnswer:";
    p.answer = static_cast<long long>(ans);
    p.task = "svamp-file";
    out.push_back(std::move(p));
  }
  return out;
}

std::optional<long long> parse_answer(const std::string& text) {
  std::string stripped;
  stripped.reserve(text.size());
  for (char c : text)
    if (c != ',') stripped += c;
  static const std::regex digits("[0-9]+");
  std::string last;
  for (auto it = std::sregex_iterator(stripped.begin(), stripped.end(), digits);
       it != std::sregex_iterator(); ++it)
    last = it->str();
  if (last.empty()) return std::nullopt;
  // leading zeros fall away under integer conversion; runs too long for the
  // integer type cannot match any ground truth, so they read as unparseable
  size_t nz = last.find_first_not_of('0');
  if (nz == std::string::npos) return 0;
  last = last.substr(nz);
  if (last.size() > 18) return std::nullopt;
  return std::stoll(last);
}

double reward(const std::string& completion_text, const Problem& problem) {
  auto got = parse_answer(completion_text);
  return got.has_value() && *got == problem.answer ? 1.0 : 0.0;
}

std::pair<int, int> parse_mult_task_name(const std::string& name) {
  static const std::regex form("mult-([1-3])x([1-3])");
  std::smatch m;
  check(std::regex_match(name, m, form),
        "task: expected mult-AxB with digits in [1,3], got \"" + name + "\"");
  return {m[1].str()[0] - '0', m[2].str()[0] - '0'};
}

}  // namespace tcl
