#pragma once

// Critic-free policy-gradient machinery over sampled completion groups:
// group-normalized advantages, a stochastic token subset rule, the k3 KL
// estimate, full-trajectory and token-subset surrogate losses, a prefix trie
// with per-transition advantages, and a replay buffer that resamples stored
// completions from intermediate positions.

#include <cmath>
#include <cstdint>
#include <deque>
#include <iostream>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "tcl/adamw.hpp"
#include "tcl/common.hpp"
#include "tcl/model.hpp"
#include "tcl/rng.hpp"
#include "tcl/tape.hpp"
#include "tcl/tasks.hpp"
#include "tcl/vocab.hpp"

namespace tcl {

struct AdvantageResult {
  std::vector<double> advantages;
  bool degenerate = false;  // zero reward spread carries no relative signal
};

// (R_i - mean)/std with the population standard deviation. A group with zero
// spread yields all-zero advantages and the degenerate flag instead of a
// division by zero.
AdvantageResult group_advantages(const std::vector<double>& rewards);

struct Group {
  std::vector<int> prompt;
  std::vector<Completion> completions;
  double mu_r = 0.0;
  double sigma_r = 0.0;
  // Recomputes the stored statistics and requires an exact match.
  void validate() const;
};

// Requires at least two completions, every reward set, and a shared prompt.
Group make_group(std::vector<int> prompt, std::vector<Completion> completions);

struct TokenSelection {
  int completion = 0;
  std::vector<int> tokens;  // ascending generated-token indices
};

// Single left-to-right scan: positions before alpha are always included and
// count toward the cap k; later positions are included with probability p
// while the budget lasts. Inclusion stops entirely once k tokens are in.
std::vector<int> select_tokens(int T, int alpha, int k, double p,
                               std::mt19937_64& rng);

std::vector<TokenSelection> make_selections(
    const std::vector<Completion>& completions, int alpha, int k, double p,
    std::mt19937_64& rng);
std::vector<TokenSelection> all_token_selections(
    const std::vector<Completion>& completions);

// ratio - log(ratio) - 1: nonnegative, zero only at ratio 1.
double kl_k3(double ratio);

// min(ratio*adv, clamp(ratio, 1-eps, 1+eps)*adv). Ties report the unclipped
// branch, which is the branch that keeps the gradient.
double ppo_clip_term(double ratio, double adv, double eps,
                     bool* used_clipped = nullptr);

struct LossStats {
  double loss = 0.0;    // minimized scalar, summed over the group
  double kl = 0.0;      // mean k3 value over contributing tokens
  int grad_tokens = 0;  // positions that contributed gradient
  int skipped = 0;      // completions that contributed nothing
  bool no_op = false;   // nothing contributed at all; no gradients written
};

// ---------------------------------------------------------------- trie

struct TrieNode {
  int count = 0;  // completions whose generation passes through this prefix
  double reward_sum = 0.0;
  int terminal_count = 0;  // completions ending exactly here
  double terminal_reward_sum = 0.0;
  std::map<int, int> children;  // token -> node index, token-ordered
};

struct PrefixTrie {
  std::vector<TrieNode> nodes;  // nodes[0] is the root (empty prefix)
  const TrieNode& root() const { return nodes.front(); }
  // Node index for a generated-token prefix, -1 when absent.
  int find(const std::vector<int>& prefix) const;
};

// Inserts every completion's generated tokens; all rewards must be set.
PrefixTrie build_prefix_trie(const std::vector<Completion>& completions);

struct TransitionAdvantage {
  std::vector<int> prefix;  // generated tokens before the transition
  int token = -1;
  double advantage = 0.0;  // mean-reward change from taking this edge
  int prefix_count = 0;
  int edge_count = 0;
};

// One record per unique edge, depth-first in token order.
std::vector<TransitionAdvantage> transition_advantages(const PrefixTrie& trie);

// One edge per line: depth, comma-joined prefix ids or "-", token, count,
// reward sum, advantage.
std::string dump_trie(const PrefixTrie& trie);

// ---------------------------------------------------------------- replay

struct ReplayEntry {
  Problem problem;
  std::vector<int> prompt_ids;
  Completion completion;  // reward set
};

// Bounded ring over past completions, evicting oldest-first, partitioned by
// a success threshold on the reward.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(size_t capacity = 512, double success_threshold = 1.0);
  void add(Problem problem, std::vector<int> prompt_ids, Completion completion);
  size_t size() const { return ring_.size(); }
  size_t capacity() const { return capacity_; }
  double success_threshold() const { return threshold_; }
  const ReplayEntry& entry(size_t i) const;
  std::vector<size_t> successes() const;  // reward >= threshold
  std::vector<size_t> failures() const;   // reward < threshold

 private:
  size_t capacity_;
  double threshold_;
  std::deque<ReplayEntry> ring_;
};

// Uniform draw without replacement; returns min(budget, pool size) entries.
std::vector<size_t> sample_without_replacement(const std::vector<size_t>& pool,
                                               int budget,
                                               std::mt19937_64& rng);

// Inclusive resample position: everything before it is kept as the prefix.
int draw_replay_position(int t_prompt, int t_total, std::mt19937_64& rng);

namespace rl_detail {

template <class T>
std::vector<T> values_at(const ad::Tensor<T>& col, const std::vector<int>& rows) {
  std::vector<T> out(rows.size());
  for (size_t j = 0; j < rows.size(); ++j) out[j] = col.data()[rows[j]];
  return out;
}

}  // namespace rl_detail

// ---------------------------------------------------------------- losses
//
// All three losses run one forward/backward per completion (or per unique
// path) and accumulate gradients into the parameter buffers; the caller owns
// the optimizer step. with_grad=false evaluates the identical value without
// touching gradients, which the finite-difference tests rely on.

// Token-subset surrogate: the per-token term is (pi/stopgrad(pi))*adv minus
// beta times the k3 KL estimate against the frozen reference, averaged over
// the selected tokens of each completion and then over the group. The ratio
// is identically 1 in value, so its gradient is adv * dlogpi.
template <class T>
LossStats sgrpo_loss(Transformer<T>& model, Transformer<T>& ref_model,
                     const std::vector<Completion>& completions,
                     const std::vector<double>& advantages,
                     const std::vector<TokenSelection>& selections, double beta,
                     bool with_grad = true) {
  check(!completions.empty(), "sgrpo: empty group");
  check(advantages.size() == completions.size(),
        "sgrpo: advantage count does not match the group");
  check(selections.size() == completions.size(),
        "sgrpo: selection count does not match the group");
  LossStats stats;
  const double inv_n = 1.0 / static_cast<double>(completions.size());
  double kl_sum = 0.0;
  for (size_t i = 0; i < completions.size(); ++i) {
    check(selections[i].completion == static_cast<int>(i),
          "sgrpo: selections are misaligned with the group");
    const auto& rows = selections[i].tokens;
    if (rows.empty()) {
      ++stats.skipped;
      continue;
    }
    const int tlen = static_cast<int>(completions[i].gen.size());
    for (int t : rows)
      check(t >= 0 && t < tlen, "sgrpo: selected index out of range");
    const int m = static_cast<int>(rows.size());

    ad::Tape<T> tape;
    auto lp = model.seq_logprobs(&tape, completions[i].prompt,
                                 completions[i].gen);
    auto sel = ad::pick(&tape, lp, rows, std::vector<int>(rows.size(), 0));
    // exp(lp - stopgrad(lp)): value 1, gradient dlogpi
    auto ratio = ad::exp_op(
        &tape, ad::add(&tape, sel, ad::scale(&tape, ad::detach(sel), T(-1))));
    auto term = ad::scale(&tape, ratio, static_cast<T>(advantages[i]));
    if (beta != 0.0) {
      std::vector<T> ref_vals;
      {
        ad::Tape<T> ref_tape;  // reference values only; nothing trains here
        auto ref_lp = ref_model.seq_logprobs(&ref_tape, completions[i].prompt,
                                             completions[i].gen);
        ref_vals = rl_detail::values_at(ref_lp, rows);
      }
      auto ref_c = ad::Tensor<T>::from(m, 1, ref_vals);
      auto d = ad::add(&tape, ref_c, ad::scale(&tape, sel, T(-1)));
      auto kl_ratio = ad::exp_op(&tape, d);
      for (int j = 0; j < m; ++j) {
        const double rv = static_cast<double>(kl_ratio.data()[j]);
        if (!std::isfinite(rv) || rv <= 0.0)
          throw NumericError("sgrpo: non-finite KL ratio");
        kl_sum += rv - static_cast<double>(d.data()[j]) - 1.0;
      }
      auto minus_one =
          ad::Tensor<T>::from(m, 1, std::vector<T>(rows.size(), T(-1)));
      auto k3 = ad::add(
          &tape, ad::add(&tape, kl_ratio, ad::scale(&tape, d, T(-1))),
          minus_one);
      term = ad::add(&tape, term, ad::scale(&tape, k3, static_cast<T>(-beta)));
    }
    auto loss_i = ad::scale(&tape, ad::sum_all(&tape, term),
                            static_cast<T>(-inv_n / m));
    stats.loss += static_cast<double>(loss_i.data()[0]);
    stats.grad_tokens += m;
    if (with_grad) tape.backward(loss_i);
  }
  if (stats.grad_tokens == 0) {
    stats.no_op = true;
    std::cerr << "sgrpo: every selection is empty, skipping the update\n";
  } else if (beta != 0.0) {
    stats.kl = kl_sum / stats.grad_tokens;
  }
  return stats;
}

// Full-trajectory surrogate with the clipped-ratio structure. The policy is
// updated once per group, so the old policy equals the current one, the
// ratio is 1 in value, the clip window contains it, and min() ties resolve
// to the unclipped branch that carries the gradient. Runs as one
// forward/backward per completion with gradient accumulation.
template <class T>
LossStats grpo_loss(Transformer<T>& model, Transformer<T>& ref_model,
                    const std::vector<Completion>& completions,
                    const std::vector<double>& advantages, double beta,
                    double eps_clip, bool with_grad = true) {
  check(!completions.empty(), "grpo: empty group");
  check(advantages.size() == completions.size(),
        "grpo: advantage count does not match the group");
  check(eps_clip > 0.0, "grpo: clip range must be positive");
  LossStats stats;
  const double inv_n = 1.0 / static_cast<double>(completions.size());
  double kl_sum = 0.0;
  for (size_t i = 0; i < completions.size(); ++i) {
    const int tlen = static_cast<int>(completions[i].gen.size());
    if (tlen == 0) {
      ++stats.skipped;
      continue;
    }
    bool used_clipped = false;
    ppo_clip_term(1.0, advantages[i], eps_clip, &used_clipped);
    check(!used_clipped, "grpo: clip branch engaged at ratio 1");

    std::vector<int> rows(tlen);
    for (int t = 0; t < tlen; ++t) rows[t] = t;

    ad::Tape<T> tape;
    auto lp = model.seq_logprobs(&tape, completions[i].prompt,
                                 completions[i].gen);
    auto sel = ad::pick(&tape, lp, rows, std::vector<int>(rows.size(), 0));
    auto ratio = ad::exp_op(
        &tape, ad::add(&tape, sel, ad::scale(&tape, ad::detach(sel), T(-1))));
    // unclipped branch; clamp(1, 1-eps, 1+eps) is the identity, so both
    // branches are this same node
    auto term = ad::scale(&tape, ratio, static_cast<T>(advantages[i]));
    if (beta != 0.0) {
      std::vector<T> ref_vals;
      {
        ad::Tape<T> ref_tape;
        auto ref_lp = ref_model.seq_logprobs(&ref_tape, completions[i].prompt,
                                             completions[i].gen);
        ref_vals = rl_detail::values_at(ref_lp, rows);
      }
      auto ref_c = ad::Tensor<T>::from(tlen, 1, ref_vals);
      auto d = ad::add(&tape, ref_c, ad::scale(&tape, sel, T(-1)));
      auto kl_ratio = ad::exp_op(&tape, d);
      for (int j = 0; j < tlen; ++j) {
        const double rv = static_cast<double>(kl_ratio.data()[j]);
        if (!std::isfinite(rv) || rv <= 0.0)
          throw NumericError("grpo: non-finite KL ratio");
        kl_sum += rv - static_cast<double>(d.data()[j]) - 1.0;
      }
      auto minus_one =
          ad::Tensor<T>::from(tlen, 1, std::vector<T>(rows.size(), T(-1)));
      auto k3 = ad::add(
          &tape, ad::add(&tape, kl_ratio, ad::scale(&tape, d, T(-1))),
          minus_one);
      term = ad::add(&tape, term, ad::scale(&tape, k3, static_cast<T>(-beta)));
    }
    auto loss_i = ad::scale(&tape, ad::sum_all(&tape, term),
                            static_cast<T>(-inv_n / tlen));
    stats.loss += static_cast<double>(loss_i.data()[0]);
    stats.grad_tokens += tlen;
    if (with_grad) tape.backward(loss_i);
  }
  if (stats.grad_tokens == 0) {
    stats.no_op = true;
    std::cerr << "grpo: every completion is empty, skipping the update\n";
  } else if (beta != 0.0) {
    stats.kl = kl_sum / stats.grad_tokens;
  }
  return stats;
}

// Trie-derived surrogate: mean over unique (prefix, token) records of the
// raw next-token probability times the transition advantage, minus lambda
// times the squared norm of the trainable parameters. Records are covered by
// walking each maximal path once, so shared prefixes cost one forward.
template <class T>
LossStats tspmo_loss(Transformer<T>& model, const std::vector<int>& context,
                     const std::vector<TransitionAdvantage>& records,
                     double lambda, bool with_grad = true) {
  LossStats stats;
  if (records.empty()) {
    std::cerr << "tspmo: no advantage records, skipping the update\n";
    stats.no_op = true;
    return stats;
  }
  const int n_u = static_cast<int>(records.size());
  std::map<std::vector<int>, std::map<int, int>> by_prefix;
  for (int r = 0; r < n_u; ++r) {
    auto& slot = by_prefix[records[r].prefix];
    check(slot.find(records[r].token) == slot.end(),
          "tspmo: duplicate advantage record");
    slot.emplace(records[r].token, r);
  }
  std::vector<char> consumed(records.size(), 0);
  for (int r = 0; r < n_u; ++r) {
    std::vector<int> path = records[r].prefix;
    path.push_back(records[r].token);
    if (by_prefix.count(path)) continue;  // a longer path covers this record
    std::vector<int> rows, recs;
    std::vector<int> walk;
    for (int j = 0; j < static_cast<int>(path.size()); ++j) {
      auto it_p = by_prefix.find(walk);
      if (it_p != by_prefix.end()) {
        auto it_e = it_p->second.find(path[j]);
        if (it_e != it_p->second.end() && !consumed[it_e->second]) {
          consumed[it_e->second] = 1;
          rows.push_back(j);
          recs.push_back(it_e->second);
        }
      }
      walk.push_back(path[j]);
    }
    if (rows.empty()) continue;

    ad::Tape<T> tape;
    auto lp = model.seq_logprobs(&tape, context, path);
    auto sel = ad::pick(&tape, lp, rows, std::vector<int>(rows.size(), 0));
    auto prob = ad::exp_op(&tape, sel);
    std::vector<T> weights(recs.size());
    for (size_t j = 0; j < recs.size(); ++j)
      weights[j] = static_cast<T>(records[recs[j]].advantage);
    auto w = ad::Tensor<T>::from(static_cast<int>(recs.size()), 1, weights);
    auto contrib = ad::sum_all(&tape, ad::mul(&tape, prob, w));
    auto loss_part = ad::scale(&tape, contrib, static_cast<T>(-1.0 / n_u));
    stats.loss += static_cast<double>(loss_part.data()[0]);
    stats.grad_tokens += static_cast<int>(rows.size());
    if (with_grad) tape.backward(loss_part);
  }
  if (lambda != 0.0) {
    ad::Tape<T> tape;
    ad::Tensor<T> acc;
    bool have = false;
    for (auto& wp : model.trainable_parameters()) {
      auto sq = ad::sum_all(&tape, ad::mul(&tape, wp, wp));
      acc = have ? ad::add(&tape, acc, sq) : sq;
      have = true;
    }
    if (have) {
      auto l2 = ad::scale(&tape, acc, static_cast<T>(lambda));
      stats.loss += static_cast<double>(l2.data()[0]);
      if (with_grad) tape.backward(l2);
    }
  }
  return stats;
}

struct ReplayConfig {
  int c_success = 1;
  int c_fail = 0;
  int group_size = 50;
  double temperature = 0.3;
  int max_tokens = 300;
  double lambda = 0.01;
};

struct ReplayStats {
  int updates = 0;         // extra optimizer steps applied
  int skipped_budget = 0;  // partition smaller than the requested budget
  double loss_sum = 0.0;
  int grad_tokens = 0;  // unique records across the replay updates
};

// Draws stored completions from each partition, resamples a fresh group from
// a random position inside each, scores them against the stored problem,
// and applies one extra trie update per replayed completion.
template <class T>
ReplayStats replay_step(ReplayBuffer& buffer, Transformer<T>& model,
                        ad::AdamW<T>& opt, const Vocabulary& vocab,
                        const ReplayConfig& cfg, std::uint64_t master_seed,
                        std::uint64_t step_index) {
  ReplayStats rs;
  if (cfg.c_success <= 0 && cfg.c_fail <= 0) return rs;
  check(cfg.group_size >= 2, "replay: group size must be at least 2");
  auto rng = make_rng(master_seed, Stream::replay, step_index);

  // an underfilled partition early in training is routine; the stat records it
  auto picks = sample_without_replacement(buffer.successes(), cfg.c_success, rng);
  if (static_cast<int>(picks.size()) < cfg.c_success)
    rs.skipped_budget += cfg.c_success - static_cast<int>(picks.size());
  auto fail_picks =
      sample_without_replacement(buffer.failures(), cfg.c_fail, rng);
  if (static_cast<int>(fail_picks.size()) < cfg.c_fail)
    rs.skipped_budget += cfg.c_fail - static_cast<int>(fail_picks.size());
  picks.insert(picks.end(), fail_picks.begin(), fail_picks.end());

  std::uint64_t slot = 0;
  for (size_t idx : picks) {
    const ReplayEntry& e = buffer.entry(idx);
    const int t_prompt = static_cast<int>(e.prompt_ids.size());
    const int t_total = t_prompt + static_cast<int>(e.completion.gen.size());
    const int t = draw_replay_position(t_prompt, t_total, rng);

    std::vector<int> prefix = e.prompt_ids;
    prefix.insert(prefix.end(), e.completion.gen.begin(),
                  e.completion.gen.begin() + (t - t_prompt));

    std::vector<std::uint64_t> seeds(cfg.group_size);
    for (int i = 0; i < cfg.group_size; ++i)
      seeds[i] = derive_seed(master_seed, Stream::replay,
                             (step_index << 8) | (slot + 1),
                             static_cast<std::uint64_t>(i) + 1);
    auto regen = model.sample_group(prefix, cfg.group_size, cfg.temperature,
                                    cfg.max_tokens, seeds);
    for (auto& c : regen) c.reward = reward(vocab.decode(c.gen), e.problem);

    auto trie = build_prefix_trie(regen);
    auto recs = transition_advantages(trie);
    LossStats ls = tspmo_loss(model, prefix, recs, cfg.lambda);
    if (!ls.no_op) {
      opt.step();
      opt.zero_grad();
      ++rs.updates;
      rs.loss_sum += ls.loss;
      rs.grad_tokens += ls.grad_tokens;
    }
    ++slot;
  }
  return rs;
}

}  // namespace tcl
