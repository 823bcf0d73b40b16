#pragma once

#include <string>
#include <vector>

#include "tcl/model.hpp"
#include "tcl/vocab.hpp"

namespace tcl {

// Warmup-corpus shape for a multiplication task. The corpus is deliberately
// bimodal: most copies of each fact are verbose worked solutions whose final
// addition is botched (the units product loses its tens digit), and the rest
// are a bare correct answer. A model imitating the majority style answers
// wrong on most facts; the short style is always right. That gap is what the
// downstream training runs climb.
struct CorpusRecipe {
  int digits_a = 2;
  int digits_b = 1;
  int verbose_per_fact = 3;
  int terse_per_fact = 1;
};

// Symbol set covering the task templates, worked solutions, and answers.
// Word fragments keep prompts short; anything else falls back to characters.
Vocabulary make_default_vocab();

// What the final addition in the verbose style actually produces for a * b:
// tens_part(a)*b plus only the last digit of units(a)*b.
long long flawed_product(int a, int b);

// " {a} * {b} = {q0} * {b} + {r} * {b} = {p1} + {p2} = {f}. Answer: {f}"
// with f = flawed_product(a, b). Requires a two-digit a.
std::string verbose_solution(int a, int b);

// " Answer: {a*b}"
std::string terse_solution(int a, int b);

// Every fact in the task's operand ranges, verbose_per_fact + terse_per_fact
// copies each, prompt and target encoded with eos terminating the target.
std::vector<PretrainExample> build_mult_corpus(const Vocabulary& v,
                                               const CorpusRecipe& r);

// Terse answers for every story-template cell, one copy each.
std::vector<PretrainExample> build_word_corpus(const Vocabulary& v);

}  // namespace tcl
