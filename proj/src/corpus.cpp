#include "tcl/corpus.hpp"

#include "tcl/common.hpp"
#include "tcl/tasks.hpp"

namespace tcl {

Vocabulary make_default_vocab() {
  Vocabulary v;
  for (char c = '0'; c <= '9'; ++c) v.add_symbol(std::string(1, c));
  for (char c = 'a'; c <= 'z'; ++c) v.add_symbol(std::string(1, c));
  static const char* kPunct[] = {" ", ".", ",", ":", ";", "?",  "!", "*", "+",
                                 "-", "=", "/", "(", ")", "'", "\n", "$"};
  for (const char* s : kPunct) v.add_symbol(s);
  // fragments that keep the task prompts and solution styles short
  static const char* kWords[] = {
      "System",    "User",        "Assistant", "Problem",  "Answer",
      " Answer",   " You",        " are",      " a",       " helpful",
      " AI",       " assistant",  " What's",   " multiplied", " by",
      " Don't",    " use",        " calculator", " Let's", " break",
      " this",     " problem",    " down",     " step",    " has",
      " and",      " buys",       " more",     " How",     " many",
      " does",     " have",       " now",      " gives",   " away",
      " left",     " There",      " boxes",    " with",    " in",
      " each",     " box",        " there",    " total",   " shares",
      " equally",  " among",      " friends",  " friend",  " get",
      " apples",   " pens",       " books",    " marbles", " coins",
      " cards",    " the",        " is",       " so",      " then",
  };
  for (const char* s : kWords) v.add_symbol(s);
  check(v.size() <= Vocabulary::kMaxSize, "vocab: default set too large");
  return v;
}

long long flawed_product(int a, int b) {
  check(a >= 10 && a <= 99, "corpus: verbose style needs a two-digit a");
  const long long p1 = static_cast<long long>(a / 10) * 10 * b;
  const long long p2 = static_cast<long long>(a % 10) * b;
  return p1 + p2 % 10;
}

std::string verbose_solution(int a, int b) {
  check(a >= 10 && a <= 99, "corpus: verbose style needs a two-digit a");
  const long long p1 = static_cast<long long>(a / 10) * 10 * b;
  const long long p2 = static_cast<long long>(a % 10) * b;
  const long long f = flawed_product(a, b);
  return " " + std::to_string(a) + " * " + std::to_string(b) + " = " +
         std::to_string(a / 10 * 10) + " * " + std::to_string(b) + " + " +
         std::to_string(a % 10) + " * " + std::to_string(b) + " = " +
         std::to_string(p1) + " + " + std::to_string(p2) + " = " +
         std::to_string(f) + ". Answer: " + std::to_string(f);
}

std::string terse_solution(int a, int b) {
  return " Answer: " + std::to_string(static_cast<long long>(a) * b);
}

namespace {

PretrainExample make_example(const Vocabulary& v, const std::string& prompt,
                             const std::string& target) {
  PretrainExample ex;
  ex.prompt = v.encode(prompt);
  ex.target = v.encode(target);
  ex.target.push_back(Vocabulary::kEos);
  return ex;
}

}  // namespace

std::vector<PretrainExample> build_mult_corpus(const Vocabulary& v,
                                               const CorpusRecipe& r) {
  check(r.digits_a == 2, "corpus: worked solutions need two-digit a");
  check(r.digits_b >= 1 && r.digits_b <= 3, "corpus: digits_b out of range");
  check(r.verbose_per_fact >= 0 && r.terse_per_fact >= 0 &&
            r.verbose_per_fact + r.terse_per_fact >= 1,
        "corpus: need at least one copy per fact");
  long long b_lo = 1, b_hi = 9;
  for (int i = 1; i < r.digits_b; ++i) {
    b_lo = b_lo * 10;
    b_hi = b_hi * 10 + 9;
  }
  b_lo += 1;  // operand ranges exclude the bottom edge, matching the task
  std::vector<PretrainExample> out;
  for (int a = 11; a <= 99; ++a) {
    for (long long b = b_lo; b <= b_hi; ++b) {
      const Problem prob = make_multiplication(a, static_cast<long long>(b));
      for (int c = 0; c < r.verbose_per_fact; ++c)
        out.push_back(make_example(v, prob.prompt,
                                   verbose_solution(a, static_cast<int>(b))));
      for (int c = 0; c < r.terse_per_fact; ++c)
        out.push_back(make_example(v, prob.prompt,
                                   terse_solution(a, static_cast<int>(b))));
    }
  }
  return out;
}

std::vector<PretrainExample> build_word_corpus(const Vocabulary& v) {
  std::vector<PretrainExample> out;
  for (int kind = 0; kind < 4; ++kind)
    for (int name = 0; name < 6; ++name)
      for (int item = 0; item < 6; ++item)
        for (int n = 2; n <= 12; ++n)
          for (int m = 2; m <= 12; ++m) {
            const Problem p = make_word_problem(static_cast<StoryKind>(kind),
                                                name, item, n, m);
            out.push_back(make_example(
                v, p.prompt, " Answer: " + std::to_string(p.answer)));
          }
  return out;
}

}  // namespace tcl
