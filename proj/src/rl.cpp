#include "tcl/rl.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>

namespace tcl {

AdvantageResult group_advantages(const std::vector<double>& rewards) {
  check(rewards.size() >= 2, "group_advantages: need at least two rewards");
  const double n = static_cast<double>(rewards.size());
  const double mu = std::accumulate(rewards.begin(), rewards.end(), 0.0) / n;
  double var = 0.0;
  for (double r : rewards) var += (r - mu) * (r - mu);
  var /= n;  // population variance
  const double sd = std::sqrt(var);
  AdvantageResult out;
  out.advantages.resize(rewards.size(), 0.0);
  if (sd == 0.0) {
    out.degenerate = true;
    return out;
  }
  for (size_t i = 0; i < rewards.size(); ++i)
    out.advantages[i] = (rewards[i] - mu) / sd;
  return out;
}

void Group::validate() const {
  check(completions.size() >= 2, "group: need at least two completions");
  double mu = 0.0;
  for (const auto& c : completions) {
    check(c.reward.has_value(), "group: completion missing reward");
    check(c.prompt == prompt, "group: completion prompt differs");
    mu += *c.reward;
  }
  mu /= static_cast<double>(completions.size());
  double var = 0.0;
  for (const auto& c : completions) var += (*c.reward - mu) * (*c.reward - mu);
  var /= static_cast<double>(completions.size());
  check(mu == mu_r && std::sqrt(var) == sigma_r,
        "group: stored reward statistics are stale");
}

Group make_group(std::vector<int> prompt, std::vector<Completion> completions) {
  Group g;
  g.prompt = std::move(prompt);
  g.completions = std::move(completions);
  check(g.completions.size() >= 2, "group: need at least two completions");
  double mu = 0.0;
  for (const auto& c : g.completions) {
    check(c.reward.has_value(), "group: completion missing reward");
    check(c.prompt == g.prompt, "group: completion prompt differs");
    mu += *c.reward;
  }
  mu /= static_cast<double>(g.completions.size());
  double var = 0.0;
  for (const auto& c : g.completions)
    var += (*c.reward - mu) * (*c.reward - mu);
  var /= static_cast<double>(g.completions.size());
  g.mu_r = mu;
  g.sigma_r = std::sqrt(var);
  return g;
}

std::vector<int> select_tokens(int T, int alpha, int k, double p,
                               std::mt19937_64& rng) {
  check(T >= 0, "select_tokens: negative length");
  check(alpha >= 0, "select_tokens: alpha must be nonnegative");
  check(k >= 1, "select_tokens: cap must be positive");
  check(p >= 0.0 && p <= 1.0, "select_tokens: probability out of range");
  std::vector<int> out;
  for (int t = 0; t < T; ++t) {
    if (static_cast<int>(out.size()) >= k) break;
    if (t < alpha)
      out.push_back(t);
    else if (model_detail::unit_uniform(rng) < p)
      out.push_back(t);
  }
  return out;
}

std::vector<TokenSelection> make_selections(
    const std::vector<Completion>& completions, int alpha, int k, double p,
    std::mt19937_64& rng) {
  std::vector<TokenSelection> out(completions.size());
  for (size_t i = 0; i < completions.size(); ++i) {
    out[i].completion = static_cast<int>(i);
    out[i].tokens = select_tokens(static_cast<int>(completions[i].gen.size()),
                                  alpha, k, p, rng);
  }
  return out;
}

std::vector<TokenSelection> all_token_selections(
    const std::vector<Completion>& completions) {
  std::vector<TokenSelection> out(completions.size());
  for (size_t i = 0; i < completions.size(); ++i) {
    out[i].completion = static_cast<int>(i);
    out[i].tokens.resize(completions[i].gen.size());
    for (size_t t = 0; t < completions[i].gen.size(); ++t)
      out[i].tokens[t] = static_cast<int>(t);
  }
  return out;
}

double kl_k3(double ratio) {
  if (!std::isfinite(ratio) || ratio <= 0.0)
    throw NumericError("kl_k3: ratio must be positive and finite");
  return ratio - std::log(ratio) - 1.0;
}

double ppo_clip_term(double ratio, double adv, double eps, bool* used_clipped) {
  check(eps > 0.0, "ppo_clip_term: clip range must be positive");
  const double clipped = std::clamp(ratio, 1.0 - eps, 1.0 + eps) * adv;
  const double raw = ratio * adv;
  if (used_clipped) *used_clipped = clipped < raw;
  return std::min(raw, clipped);
}

int PrefixTrie::find(const std::vector<int>& prefix) const {
  int cur = 0;
  for (int v : prefix) {
    auto it = nodes[cur].children.find(v);
    if (it == nodes[cur].children.end()) return -1;
    cur = it->second;
  }
  return cur;
}

PrefixTrie build_prefix_trie(const std::vector<Completion>& completions) {
  check(!completions.empty(), "prefix trie: empty completion set");
  PrefixTrie trie;
  trie.nodes.emplace_back();
  for (const auto& c : completions) {
    check(c.reward.has_value(), "prefix trie: completion missing reward");
    const double r = *c.reward;
    trie.nodes[0].count += 1;
    trie.nodes[0].reward_sum += r;
    int cur = 0;
    for (int v : c.gen) {
      int next;
      auto it = trie.nodes[cur].children.find(v);
      if (it == trie.nodes[cur].children.end()) {
        next = static_cast<int>(trie.nodes.size());
        trie.nodes[cur].children.emplace(v, next);
        trie.nodes.emplace_back();
      } else {
        next = it->second;
      }
      cur = next;
      trie.nodes[cur].count += 1;
      trie.nodes[cur].reward_sum += r;
    }
    trie.nodes[cur].terminal_count += 1;
    trie.nodes[cur].terminal_reward_sum += r;
  }
  return trie;
}

std::vector<TransitionAdvantage> transition_advantages(const PrefixTrie& trie) {
  check(!trie.nodes.empty(), "transition advantages: empty trie");
  std::vector<TransitionAdvantage> out;
  out.reserve(trie.nodes.size() - 1);
  std::vector<int> prefix;
  auto mean = [&](int idx) {
    return trie.nodes[idx].reward_sum / trie.nodes[idx].count;
  };
  std::function<void(int)> walk = [&](int idx) {
    for (const auto& [v, child] : trie.nodes[idx].children) {
      TransitionAdvantage rec;
      rec.prefix = prefix;
      rec.token = v;
      rec.advantage = mean(child) - mean(idx);
      rec.prefix_count = trie.nodes[idx].count;
      rec.edge_count = trie.nodes[child].count;
      out.push_back(std::move(rec));
      prefix.push_back(v);
      walk(child);
      prefix.pop_back();
    }
  };
  walk(0);
  return out;
}

std::string dump_trie(const PrefixTrie& trie) {
  std::ostringstream os;
  std::vector<int> prefix;
  auto mean = [&](int idx) {
    return trie.nodes[idx].reward_sum / trie.nodes[idx].count;
  };
  std::function<void(int)> walk = [&](int idx) {
    for (const auto& [v, child] : trie.nodes[idx].children) {
      os << prefix.size() + 1 << '\t';
      if (prefix.empty()) {
        os << '-';
      } else {
        for (size_t j = 0; j < prefix.size(); ++j)
          os << (j ? "," : "") << prefix[j];
      }
      os << '\t' << v << '\t' << trie.nodes[child].count << '\t'
         << trie.nodes[child].reward_sum << '\t' << mean(child) - mean(idx)
         << '\n';
      prefix.push_back(v);
      walk(child);
      prefix.pop_back();
    }
  };
  walk(0);
  return os.str();
}

ReplayBuffer::ReplayBuffer(size_t capacity, double success_threshold)
    : capacity_(capacity), threshold_(success_threshold) {
  check(capacity_ >= 1, "replay buffer: capacity must be positive");
}

void ReplayBuffer::add(Problem problem, std::vector<int> prompt_ids,
                       Completion completion) {
  check(completion.reward.has_value(), "replay buffer: completion missing reward");
  ring_.push_back(ReplayEntry{std::move(problem), std::move(prompt_ids),
                              std::move(completion)});
  if (ring_.size() > capacity_) ring_.pop_front();
}

const ReplayEntry& ReplayBuffer::entry(size_t i) const {
  check(i < ring_.size(), "replay buffer: index out of range");
  return ring_[i];
}

std::vector<size_t> ReplayBuffer::successes() const {
  std::vector<size_t> out;
  for (size_t i = 0; i < ring_.size(); ++i)
    if (*ring_[i].completion.reward >= threshold_) out.push_back(i);
  return out;
}

std::vector<size_t> ReplayBuffer::failures() const {
  std::vector<size_t> out;
  for (size_t i = 0; i < ring_.size(); ++i)
    if (*ring_[i].completion.reward < threshold_) out.push_back(i);
  return out;
}

std::vector<size_t> sample_without_replacement(const std::vector<size_t>& pool,
                                               int budget,
                                               std::mt19937_64& rng) {
  if (budget <= 0 || pool.empty()) return {};
  std::vector<size_t> idx = pool;
  const size_t m = std::min<size_t>(static_cast<size_t>(budget), idx.size());
  for (size_t j = 0; j < m; ++j) {
    const size_t swap_with = j + rng() % (idx.size() - j);
    std::swap(idx[j], idx[swap_with]);
  }
  idx.resize(m);
  return idx;
}

int draw_replay_position(int t_prompt, int t_total, std::mt19937_64& rng) {
  check(t_prompt >= 0 && t_total >= t_prompt,
        "replay position: invalid range");
  const std::uint64_t span = static_cast<std::uint64_t>(t_total - t_prompt) + 1;
  return t_prompt + static_cast<int>(rng() % span);
}

}  // namespace tcl
