#pragma once

// Arithmetic problem generators, prompt templating, the answer parser, and
// the exact-match reward.

#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

namespace tcl {

struct Problem {
  std::string prompt;
  long long answer = 0;
  std::string task;  // "mult-AxB" | "wordprob" | "svamp-file"
};

// Operands are uniform over [10^(d-1)+1, 10^d - 1] per digit count d in [1,3].
Problem gen_multiplication(std::mt19937_64& rng, int digits_a, int digits_b);
// Deterministic construction used by tests and the corpus builder.
Problem make_multiplication(long long a, long long b);

// One-step arithmetic stories with small integers.
enum class StoryKind { add, subtract, multiply, divide };
Problem gen_word_problem(std::mt19937_64& rng);
// Exposed so tests can sweep every template cell exhaustively.
Problem make_word_problem(StoryKind kind, int name_idx, int item_idx, int n,
                          int m);

// Array of records with Body, Question, and Answer fields. Integer-valued
// answers are kept; fractional ones are skipped with a warning on stderr.
std::vector<Problem> load_svamp(const std::string& path);

// Comma strip, then a scan for unsigned digit runs; the last run wins.
std::optional<long long> parse_answer(const std::string& text);

double reward(const std::string& completion_text, const Problem& problem);

// "mult-AxB" -> digit pair; anything else is a contract violation.
std::pair<int, int> parse_mult_task_name(const std::string& name);

}  // namespace tcl
