// Release gate. Each check prints one [PASS]/[FAIL] line and the binary
// exits nonzero if any check fails. The desk-scale checks train real models
// and take tens of minutes; their artifacts are cached under --work-dir,
// keyed by the constants that produced them, so reruns only re-verify.

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "tcl/adamw.hpp"
#include "tcl/common.hpp"
#include "tcl/finite_diff.hpp"
#include "tcl/metrics.hpp"
#include "tcl/model.hpp"
#include "tcl/rl.hpp"
#include "tcl/rng.hpp"
#include "tcl/run_config.hpp"
#include "tcl/tasks.hpp"
#include "tcl/trainer.hpp"
#include "tcl/vocab.hpp"

namespace fs = std::filesystem;
using namespace tcl;
using ad::Tape;
using ad::Tensor;

namespace {

// ------------------------------------------------------------------ shared

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int prec = 4) {
  std::ostringstream os;
  os.precision(prec);
  os << std::fixed << v;
  return os.str();
}

std::string sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2e", v);
  return buf;
}

double median3(double a, double b, double c) {
  std::vector<double> v{a, b, c};
  std::sort(v.begin(), v.end());
  return v[1];
}

// ------------------------------------------------- toy fixtures (2 and 3)

ModelConfig toy_config() {
  ModelConfig c;
  c.layers = 2;
  c.width = 32;
  c.heads = 4;
  c.ffw = 64;
  c.max_context = 96;
  c.vocab_size = 16;
  return c;
}

// adapters start with a zero output factor; spreading both factors makes
// every gradient path and the shrinkage term nontrivial
void nudge_adapters(Transformer<double>& m, uint64_t seed) {
  std::mt19937_64 g(seed);
  std::normal_distribution<double> nd(0.0, 0.05);
  for (auto p : m.trainable_parameters())
    for (size_t j = 0; j < p.size(); ++j) p.data()[j] = nd(g);
}

Transformer<double> toy_model(uint64_t seed) {
  Transformer<double> m(toy_config(), seed);
  m.attach_lora(0.5, 1, 1.0, seed + 1);
  nudge_adapters(m, seed + 2);
  return m;
}

Completion comp(std::vector<int> prompt, std::vector<int> gen, double r) {
  Completion c;
  c.prompt = std::move(prompt);
  c.gen = std::move(gen);
  c.stopped = StopReason::eos;
  c.reward = r;
  return c;
}

// random group over a tiny alphabet with both reward values present
std::vector<Completion> random_group(std::mt19937_64& rng) {
  const int n = 2 + static_cast<int>(rng() % 3);
  std::vector<int> prompt{3 + static_cast<int>(rng() % 5)};
  std::vector<Completion> cs;
  for (int i = 0; i < n; ++i) {
    const int len = 1 + static_cast<int>(rng() % 5);
    std::vector<int> gen(len);
    for (auto& t : gen) t = 3 + static_cast<int>(rng() % 10);
    cs.push_back(comp(prompt, std::move(gen), i == 0 ? 1.0 : 0.0));
  }
  cs.back().reward = 0.0;
  if (n > 2) cs[1].reward = static_cast<double>(rng() % 2);
  return cs;
}

std::vector<std::vector<double>> grads_of(
    const std::vector<Tensor<double>>& ps) {
  std::vector<std::vector<double>> out;
  for (const auto& p : ps) {
    const double* g = p.grad_data();
    std::vector<double> v(p.size(), 0.0);
    if (g)
      for (size_t j = 0; j < p.size(); ++j) v[j] = g[j];
    out.push_back(std::move(v));
  }
  return out;
}

void clear_grads(std::vector<Tensor<double>> ps) {
  for (auto& p : ps) p.zero_grad();
}

double max_grad_diff(const std::vector<std::vector<double>>& a,
                     const std::vector<std::vector<double>>& b) {
  double worst = 0.0;
  for (size_t i = 0; i < a.size(); ++i)
    for (size_t j = 0; j < a[i].size(); ++j)
      worst = std::max(worst, std::abs(a[i][j] - b[i][j]));
  return worst;
}

// The token-subset and full-trajectory losses route the advantage through a
// ratio whose denominator is detached, so at evaluation the factor is the
// constant one and its gradient is the score. Differencing that constant
// numerically would measure zero, so the probe target is the equivalent
// score form: -1/n sum_i A_i mean_t [log pi - beta k3].
double logprob_form_value(Transformer<double>& model,
                          Transformer<double>& ref,
                          const std::vector<Completion>& comps,
                          const std::vector<double>& adv,
                          const std::vector<TokenSelection>& sel,
                          double beta) {
  double loss = 0.0;
  const double inv_n = 1.0 / static_cast<double>(comps.size());
  for (size_t i = 0; i < comps.size(); ++i) {
    const auto& rows = sel[i].tokens;
    if (rows.empty()) continue;
    Tape<double> tape;
    auto lp = model.seq_logprobs(&tape, comps[i].prompt, comps[i].gen);
    std::vector<double> ref_vals;
    if (beta != 0.0) {
      Tape<double> rt;
      auto rlp = ref.seq_logprobs(&rt, comps[i].prompt, comps[i].gen);
      ref_vals = rl_detail::values_at(rlp, rows);
    }
    double acc = 0.0;
    for (size_t j = 0; j < rows.size(); ++j) {
      const double v = lp.data()[rows[j]];
      acc += adv[i] * v;
      if (beta != 0.0) acc -= beta * kl_k3(std::exp(ref_vals[j] - v));
    }
    loss += -inv_n * acc / static_cast<double>(rows.size());
  }
  return loss;
}

// backward pass of the same score form, for gradient comparison
void logprob_form_backward(Transformer<double>& model,
                           const std::vector<Completion>& comps,
                           const std::vector<double>& adv,
                           const std::vector<TokenSelection>& sel) {
  const double inv_n = 1.0 / static_cast<double>(comps.size());
  for (size_t i = 0; i < comps.size(); ++i) {
    const auto& rows = sel[i].tokens;
    if (rows.empty()) continue;
    Tape<double> tape;
    auto lp = model.seq_logprobs(&tape, comps[i].prompt, comps[i].gen);
    auto picked =
        ad::pick(&tape, lp, rows, std::vector<int>(rows.size(), 0));
    auto w = Tensor<double>::from(
        static_cast<int>(rows.size()), 1,
        std::vector<double>(rows.size(), adv[i]));
    auto obj = ad::sum_all(&tape, ad::mul(&tape, picked, w));
    auto loss = ad::scale(&tape, obj,
                          -inv_n / static_cast<double>(rows.size()));
    tape.backward(loss);
  }
}

// --------------------------------------------------------------- check 1

Outcome check_trie_oracle() {
  const auto t0 = std::chrono::steady_clock::now();
  auto rng = make_rng(818, Stream::oracle);
  double worst = 0.0;
  for (int inst = 0; inst < 500; ++inst) {
    const int n = 1 + static_cast<int>(rng() % 50);
    const int vocab = 1 + static_cast<int>(rng() % 5);
    std::vector<Completion> cs;
    for (int i = 0; i < n; ++i) {
      const int len = 1 + static_cast<int>(rng() % 10);
      std::vector<int> gen(len);
      for (auto& t : gen) t = 3 + static_cast<int>(rng() % vocab);
      cs.push_back(comp({3}, std::move(gen), static_cast<double>(rng() % 2)));
    }
    auto recs = transition_advantages(build_prefix_trie(cs));

    // oracle: rescan every completion per prefix
    auto scan = [&](const std::vector<int>& prefix, int* count) {
      double sum = 0.0;
      int c = 0;
      for (const auto& x : cs) {
        if (x.gen.size() < prefix.size()) continue;
        if (!std::equal(prefix.begin(), prefix.end(), x.gen.begin())) continue;
        ++c;
        sum += *x.reward;
      }
      *count = c;
      return c ? sum / c : 0.0;
    };

    std::set<std::vector<int>> expected_edges;
    for (const auto& x : cs)
      for (size_t l = 0; l < x.gen.size(); ++l) {
        std::vector<int> key(x.gen.begin(), x.gen.begin() + l + 1);
        expected_edges.insert(key);
      }
    std::set<std::vector<int>> seen_edges;
    for (const auto& r : recs) {
      std::vector<int> child = r.prefix;
      child.push_back(r.token);
      seen_edges.insert(child);
      int pc = 0, cc = 0;
      const double mp = scan(r.prefix, &pc);
      const double mc = scan(child, &cc);
      if (pc != r.prefix_count || cc != r.edge_count)
        return {false, "count mismatch at instance " + std::to_string(inst)};
      const double d = std::abs(r.advantage - (mc - mp));
      worst = std::max(worst, d);
      if (d > 1e-12)
        return {false, "advantage off by " + sci(d) +
                           " at instance " + std::to_string(inst)};
    }
    if (seen_edges != expected_edges)
      return {false, "edge set mismatch at instance " + std::to_string(inst) +
                         ": " + std::to_string(seen_edges.size()) + " vs " +
                         std::to_string(expected_edges.size())};
  }
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  if (secs >= 10.0) return {false, "took " + fmt(secs, 1) + "s, budget 10s"};
  return {true, "500 instances, worst advantage error " +
                    sci(worst) + ", " + fmt(secs, 2) + "s"};
}

// --------------------------------------------------------------- check 2

Outcome check_finite_differences() {
  const auto t0 = std::chrono::steady_clock::now();
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    auto rng = make_rng(500 + trial, Stream::oracle, 2);
    auto model = toy_model(9000 + 17 * trial);
    auto cs = random_group(rng);
    std::vector<double> rewards;
    for (const auto& c : cs) rewards.push_back(*c.reward);
    const auto adv = group_advantages(rewards).advantages;
    auto params = model.trainable_parameters();
    clear_grads(params);

    ad::FiniteDiffReport rep;
    const int which = trial % 3;
    if (which == 0) {
      Transformer<double> ref(toy_config(), 7000 + trial);
      const double beta = 0.03;
      auto sel = all_token_selections(cs);
      grpo_loss(model, ref, cs, adv, beta, 0.2);
      rep = ad::finite_diff_check(
          [&] { return logprob_form_value(model, ref, cs, adv, sel, beta); },
          params, 1e-5);
    } else if (which == 1) {
      Transformer<double> ref(toy_config(), 7000 + trial);
      const double beta = 0.05;
      auto sel = make_selections(cs, 1, 4, 0.5, rng);
      sgrpo_loss(model, ref, cs, adv, sel, beta);
      rep = ad::finite_diff_check(
          [&] { return logprob_form_value(model, ref, cs, adv, sel, beta); },
          params, 1e-5);
    } else {
      auto recs = transition_advantages(build_prefix_trie(cs));
      const double lambda = 0.02;
      const auto& ctx = cs[0].prompt;
      tspmo_loss(model, ctx, recs, lambda);
      rep = ad::finite_diff_check(
          [&] { return tspmo_loss(model, ctx, recs, lambda, false).loss; },
          params, 1e-5);
    }
    worst = std::max(worst, rep.max_rel_err);
    if (rep.max_rel_err > 1e-5)
      return {false, "trial " + std::to_string(trial) + " rel err " +
                         sci(rep.max_rel_err)};
    clear_grads(params);
  }
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  if (secs >= 120.0) return {false, "took " + fmt(secs, 1) + "s, budget 120s"};
  return {true, "50 trials over the three losses, worst rel err " +
                    sci(worst) + ", " + fmt(secs, 1) + "s"};
}

// --------------------------------------------------------------- check 3

Outcome check_identities() {
  // full-trajectory loss reduces to the subset loss over all tokens
  for (int s = 0; s < 5; ++s) {
    auto rng = make_rng(640 + s, Stream::oracle, 3);
    auto cs = random_group(rng);
    std::vector<double> rewards;
    for (const auto& c : cs) rewards.push_back(*c.reward);
    const auto adv = group_advantages(rewards).advantages;
    const double beta = 0.04;

    auto m1 = toy_model(300 + s);
    Transformer<double> ref(toy_config(), 400 + s);
    auto p1 = m1.trainable_parameters();
    clear_grads(p1);
    const auto st1 = grpo_loss(m1, ref, cs, adv, beta, 0.2);
    const auto g1 = grads_of(p1);

    auto m2 = toy_model(300 + s);
    Transformer<double> ref2(toy_config(), 400 + s);
    auto p2 = m2.trainable_parameters();
    clear_grads(p2);
    const auto st2 =
        sgrpo_loss(m2, ref2, cs, adv, all_token_selections(cs), beta);
    const auto g2 = grads_of(p2);

    if (std::abs(st1.loss - st2.loss) > 1e-6)
      return {false, "all-token loss values differ by " +
                         sci(std::abs(st1.loss - st2.loss))};
    const double gd = max_grad_diff(g1, g2);
    if (gd > 1e-6)
      return {false, "all-token gradients differ by " + sci(gd)};
  }

  // ratio-term gradient equals advantage times the score
  for (int s = 0; s < 5; ++s) {
    auto rng = make_rng(650 + s, Stream::oracle, 3);
    auto cs = random_group(rng);
    std::vector<double> rewards;
    for (const auto& c : cs) rewards.push_back(*c.reward);
    const auto adv = group_advantages(rewards).advantages;
    auto sel = make_selections(cs, 1, 4, 0.5, rng);

    auto m1 = toy_model(500 + s);
    Transformer<double> ref(toy_config(), 600 + s);
    auto p1 = m1.trainable_parameters();
    clear_grads(p1);
    sgrpo_loss(m1, ref, cs, adv, sel, 0.0);
    const auto g1 = grads_of(p1);

    auto m2 = toy_model(500 + s);
    auto p2 = m2.trainable_parameters();
    clear_grads(p2);
    logprob_form_backward(m2, cs, adv, sel);
    const auto g2 = grads_of(p2);

    const double gd = max_grad_diff(g1, g2);
    if (gd > 1e-6)
      return {false, "ratio-term gradient off by " + sci(gd)};
  }

  // divergence estimate is nonnegative and zero exactly at ratio one
  for (int i = 0; i <= 600; ++i) {
    const double r = std::pow(10.0, -3.0 + i / 100.0);
    const double v = kl_k3(r);
    if (!(v >= 0.0))
      return {false, "negative divergence at ratio " + std::to_string(r)};
    if (r == 1.0 && v != 0.0)
      return {false, "nonzero divergence at ratio one"};
    if (r != 1.0 && v == 0.0)
      return {false, "zero divergence at ratio " + std::to_string(r)};
  }
  if (kl_k3(1.0) != 0.0) return {false, "divergence at ratio one is not zero"};

  return {true,
          "all-token equivalence, score-form gradient, divergence sign over "
          "601 ratios"};
}

// --------------------------------------------------------------- check 4

Outcome check_selection_law() {
  auto rng = make_rng(44, Stream::oracle, 4);
  // structural laws over random draws
  for (int it = 0; it < 200; ++it) {
    const int T = 1 + static_cast<int>(rng() % 300);
    const int alpha = static_cast<int>(rng() % 120);
    const int k = 1 + static_cast<int>(rng() % 150);
    const double p = (rng() % 101) / 100.0;
    const auto sel = select_tokens(T, alpha, k, p, rng);
    if (static_cast<int>(sel.size()) > k)
      return {false, "cap exceeded: " + std::to_string(sel.size()) + " > " +
                         std::to_string(k)};
    const int forced = std::min({alpha, k, T});
    if (static_cast<int>(sel.size()) < forced)
      return {false, "forced prefix truncated"};
    for (int t = 0; t < forced; ++t)
      if (sel[static_cast<size_t>(t)] != t)
        return {false, "forced prefix not included at t=" + std::to_string(t)};
    for (size_t j = 0; j + 1 < sel.size(); ++j)
      if (sel[j] >= sel[j + 1]) return {false, "selection not ascending"};
    if (!sel.empty() && (sel.front() < 0 || sel.back() >= T))
      return {false, "selection out of range"};
  }
  // inclusion rate over 10,000 positions, three-sigma binomial band
  std::string rates;
  for (const double p : {0.1, 0.3, 0.9}) {
    const int T = 10000;
    auto prng = make_rng(45, Stream::oracle, static_cast<uint64_t>(p * 100));
    const auto sel = select_tokens(T, 0, T, p, prng);
    const double got = static_cast<double>(sel.size());
    const double want = p * T;
    const double sigma = std::sqrt(T * p * (1.0 - p));
    if (std::abs(got - want) > 3.0 * sigma)
      return {false, "rate " + fmt(got / T) + " outside 3 sigma of " + fmt(p)};
    rates += fmt(got / T, 3) + "/" + fmt(p, 1) + " ";
  }
  return {true, "forced prefix and cap over 200 draws; rates " + rates +
                    "within 3 sigma"};
}

// --------------------------------------------------------------- check 5

Outcome check_advantage_normalization() {
  const auto fix = group_advantages({1, 1, 0, 0, 0, 0, 0, 0});
  if (fix.degenerate) return {false, "fixture flagged degenerate"};
  const double hi = std::sqrt(3.0), lo = -1.0 / std::sqrt(3.0);
  for (size_t i = 0; i < 8; ++i) {
    const double want = i < 2 ? hi : lo;
    if (std::abs(fix.advantages[i] - want) > 1e-9)
      return {false, "fixture advantage " + std::to_string(i) + " is " +
                         std::to_string(fix.advantages[i])};
  }

  auto rng = make_rng(55, Stream::oracle, 5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int it = 0; it < 200; ++it) {
    const int n = 2 + static_cast<int>(rng() % 63);
    std::vector<double> rs(static_cast<size_t>(n));
    for (auto& r : rs) r = u(rng);
    const auto res = group_advantages(rs);
    double sum = 0.0;
    for (double a : res.advantages) sum += a;
    if (std::abs(sum) > 1e-9)
      return {false, "advantages sum to " + sci(sum)};
  }

  for (const auto& rs : std::vector<std::vector<double>>{
           {0.5, 0.5, 0.5, 0.5}, {0, 0}, {1, 1, 1}}) {
    const auto res = group_advantages(rs);
    if (!res.degenerate) return {false, "zero-spread group not flagged"};
    for (double a : res.advantages)
      if (a != 0.0) return {false, "zero-spread group has nonzero advantage"};
  }
  return {true,
          "fixture +-sqrt(3),-1/sqrt(3); zero sums over 200 groups; "
          "zero-spread flagged"};
}

// --------------------------------------------------------------- check 6

Outcome check_parser_golden() {
  const std::string path = std::string(ACCEPT_DATA_DIR) + "/parser_golden.txt";
  std::ifstream f(path);
  if (!f) return {false, "cannot open " + path};
  struct Case {
    std::string input;
    bool has = false;
    long long want = 0;
  };
  std::vector<Case> cases;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) return {false, "malformed golden line"};
    Case c;
    c.input = line.substr(tab + 1);
    const std::string lhs = line.substr(0, tab);
    if (lhs != "absent") {
      c.has = true;
      c.want = std::stoll(lhs);
    }
    cases.push_back(std::move(c));
  }
  if (cases.size() < 20)
    return {false, "only " + std::to_string(cases.size()) + " golden cases"};
  for (int pass = 0; pass < 2; ++pass) {
    for (const auto& c : cases) {
      const auto got = parse_answer(c.input);
      if (got.has_value() != c.has || (c.has && *got != c.want))
        return {false, "mismatch on '" + c.input + "'"};
    }
  }
  return {true, std::to_string(cases.size()) +
                    " cases bit-stable across repeat parses"};
}

// ------------------------------------------------------- desk-scale runs

// all knobs for the slow checks in one place; the cache tags derive from
// these values so changing any of them forces a re-run
struct DeskSetup {
  uint64_t base_seed = 101;
  int pretrain_steps = 12000;
  double pretrain_lr = 1e-3;
  int verbose_per_fact = 3;
  int terse_per_fact = 2;
  int eval_size = 200;
  int train_steps = 400;   // budget cap is 500
  int account_steps = 300;
  uint64_t account_seed = 11;
  int sgrpo_account_alpha = 0;
  int sgrpo_account_k = 25;
  // adapter and optimizer recipe shared by the training runs; desk-scale
  // gradients are orders of magnitude smaller than the regularizer terms
  // were tuned for, so both penalties are off here
  double rl_lr = 3e-4;
  double rl_lambda = 0.0;
  double rl_beta = 0.0;
  double lora_fraction = 1.0;
  int lora_rank = 8;
  double lora_scaling = 4.0;
};

const DeskSetup kDesk;

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream os;
  os << f.rdbuf();
  return os.str();
}

bool tag_matches(const fs::path& dir, const std::string& tag) {
  return fs::exists(dir / "tag.txt") && slurp(dir / "tag.txt") == tag;
}

void write_text(const fs::path& p, const std::string& body) {
  std::ofstream f(p, std::ios::binary);
  f << body;
}

RunConfig desk_defaults() {
  RunConfig cfg;  // library defaults already carry the desk-scale shape
  cfg.task = "mult-2x1";
  cfg.eval_size = kDesk.eval_size;
  return cfg;
}

// pretrains the shared base model once; later invocations reuse the artifact
fs::path ensure_base(const fs::path& work, double* elapsed_s) {
  const fs::path dir = work / "base";
  const std::string tag = "base|" + std::to_string(kDesk.base_seed) + "|" +
                          std::to_string(kDesk.pretrain_steps) + "|" +
                          format_double(kDesk.pretrain_lr) + "|" +
                          std::to_string(kDesk.verbose_per_fact) + ":" +
                          std::to_string(kDesk.terse_per_fact);
  if (tag_matches(dir, tag) && fs::exists(dir / "base.tcl")) {
    *elapsed_s = std::stod(slurp(dir / "elapsed.txt"));
    return dir;
  }
  fs::remove_all(dir);
  RunConfig cfg = desk_defaults();
  cfg.seed = kDesk.base_seed;
  cfg.pretrain_steps = kDesk.pretrain_steps;
  cfg.pretrain_lr = kDesk.pretrain_lr;
  cfg.verbose_per_fact = kDesk.verbose_per_fact;
  cfg.terse_per_fact = kDesk.terse_per_fact;
  cfg.out_dir = dir.string();
  const auto t0 = std::chrono::steady_clock::now();
  pretrain(cfg);
  *elapsed_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  write_text(dir / "elapsed.txt", format_double(*elapsed_s));
  write_text(dir / "tag.txt", tag);
  return dir;
}

struct RunArtifacts {
  std::vector<MetricsRow> rows;
  double final_eval = -1.0;
  double elapsed_s = 0.0;
  bool cached = false;
};

RunArtifacts run_cached(const RunConfig& cfg, const std::string& tag) {
  const fs::path dir = cfg.out_dir;
  RunArtifacts art;
  if (tag_matches(dir, tag) && fs::exists(dir / "metrics.csv")) {
    art.rows = read_metrics((dir / "metrics.csv").string());
    art.elapsed_s = std::stod(slurp(dir / "elapsed.txt"));
    art.cached = true;
  } else {
    fs::remove_all(dir);
    const auto t0 = std::chrono::steady_clock::now();
    const auto tr = train(cfg);
    art.elapsed_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    if (tr.aborted) throw NumericError("run aborted: " + cfg.out_dir);
    art.rows = tr.rows;
    write_text(dir / "elapsed.txt", format_double(art.elapsed_s));
    write_text(dir / "tag.txt", tag);
  }
  for (auto it = art.rows.rbegin(); it != art.rows.rend(); ++it)
    if (it->eval_acc >= 0.0) {
      art.final_eval = it->eval_acc;
      break;
    }
  check(art.final_eval >= 0.0, "run logged no held-out accuracy");
  return art;
}

RunConfig desk_run_config(const fs::path& base, const std::string& algo,
                          uint64_t seed, int steps, const fs::path& out) {
  RunConfig cfg = desk_defaults();
  cfg.algo = algo;
  cfg.seed = seed;
  cfg.steps = steps;
  cfg.base_checkpoint = (base / "base.tcl").string();
  cfg.vocab_path = (base / "vocab.txt").string();
  cfg.out_dir = out.string();
  cfg.eval_every = 100;
  cfg.checkpoint_every = 1000;
  cfg.lr = kDesk.rl_lr;
  cfg.lambda = kDesk.rl_lambda;
  cfg.beta = kDesk.rl_beta;
  cfg.lora_fraction = kDesk.lora_fraction;
  cfg.lora_rank = kDesk.lora_rank;
  cfg.lora_scaling = kDesk.lora_scaling;
  return cfg;
}

std::string run_tag(const RunConfig& cfg) {
  return cfg.algo + "|" + std::to_string(cfg.seed) + "|" +
         std::to_string(cfg.steps) + "|" + std::to_string(cfg.alpha) + "|" +
         std::to_string(cfg.k) + "|" + format_double(cfg.p) + "|" +
         std::to_string(kDesk.pretrain_steps) + "|" + format_double(cfg.lr) +
         "|" + format_double(cfg.lambda) + "|" + format_double(cfg.beta) +
         "|" + format_double(cfg.lora_fraction) + "|" +
         std::to_string(cfg.lora_rank) + "|" +
         format_double(cfg.lora_scaling) + "|" +
         std::to_string(kDesk.verbose_per_fact) + ":" +
         std::to_string(kDesk.terse_per_fact);
}

// --------------------------------------------------------------- check 7

Outcome check_desk_training(const fs::path& work) {
  double total = 0.0, pt = 0.0;
  const fs::path base = ensure_base(work, &pt);
  total += pt;

  // base accuracy must sit in the improvable band
  Vocabulary vocab = Vocabulary::load((base / "vocab.txt").string());
  RunConfig mc = desk_defaults();
  auto base_model = load_model(mc, vocab, (base / "base.tcl").string());
  ProblemSource src("mult-2x1", "");

  const uint64_t seeds[3] = {1, 2, 3};
  double base_acc[3], tspmo_acc[3], sgrpo_acc[3];
  std::string per_seed;
  for (int i = 0; i < 3; ++i) {
    const auto eval_set = src.eval_set(kDesk.eval_size, seeds[i]);
    base_acc[i] = evaluate(base_model, vocab, eval_set, 0.3, 300, true,
                           seeds[i])
                      .accuracy;
    if (base_acc[i] < 0.20 || base_acc[i] > 0.50)
      return {false, "base accuracy " + fmt(base_acc[i]) + " on seed " +
                         std::to_string(seeds[i]) +
                         " outside the 20-50% band"};
    auto tcfg = desk_run_config(base, "tspmo", seeds[i], kDesk.train_steps,
                                work / "e2e" /
                                    ("tspmo_s" + std::to_string(seeds[i])));
    auto tart = run_cached(tcfg, run_tag(tcfg));
    tspmo_acc[i] = tart.final_eval;
    total += tart.elapsed_s;

    auto scfg = desk_run_config(base, "sgrpo", seeds[i], kDesk.train_steps,
                                work / "e2e" /
                                    ("sgrpo_s" + std::to_string(seeds[i])));
    auto sart = run_cached(scfg, run_tag(scfg));
    sgrpo_acc[i] = sart.final_eval;
    total += sart.elapsed_s;

    per_seed += "s" + std::to_string(seeds[i]) + " " + fmt(base_acc[i], 2) +
                "->" + fmt(tspmo_acc[i], 2) + "(tspmo)/" +
                fmt(sgrpo_acc[i], 2) + "(sgrpo) ";
  }

  const double med_gain = median3(tspmo_acc[0] - base_acc[0],
                                  tspmo_acc[1] - base_acc[1],
                                  tspmo_acc[2] - base_acc[2]);
  const double med_t = median3(tspmo_acc[0], tspmo_acc[1], tspmo_acc[2]);
  const double med_s = median3(sgrpo_acc[0], sgrpo_acc[1], sgrpo_acc[2]);
  if (med_gain < 0.15)
    return {false, per_seed + "median gain " + fmt(med_gain) + " < +15pp"};
  if (med_t < med_s)
    return {false, per_seed + "tspmo median " + fmt(med_t) +
                       " below sgrpo median " + fmt(med_s)};
  if (total >= 3600.0)
    return {false, "pipeline took " + fmt(total, 0) + "s, budget 3600s"};
  return {true, per_seed + "| median gain +" + fmt(med_gain * 100, 1) +
                    "pp, medians tspmo " + fmt(med_t, 2) + " >= sgrpo " +
                    fmt(med_s, 2) + ", " + fmt(total, 0) + "s"};
}

// --------------------------------------------------------------- check 8

Outcome check_token_accounting(const fs::path& work) {
  double total = 0.0, pt = 0.0;
  const fs::path base = ensure_base(work, &pt);

  auto gcfg = desk_run_config(base, "grpo", kDesk.account_seed,
                              kDesk.account_steps, work / "account" / "grpo");
  gcfg.eval_every = kDesk.account_steps;
  gcfg.eval_size = 50;
  auto scfg = desk_run_config(base, "sgrpo", kDesk.account_seed,
                              kDesk.account_steps, work / "account" / "sgrpo");
  scfg.eval_every = kDesk.account_steps;
  scfg.eval_size = 50;
  // the forced prefix must not cover whole desk-scale completions, or the
  // token subset degenerates to the full trajectory
  scfg.alpha = kDesk.sgrpo_account_alpha;
  scfg.k = kDesk.sgrpo_account_k;
  auto tcfg = desk_run_config(base, "tspmo", kDesk.account_seed,
                              kDesk.account_steps, work / "account" / "tspmo");
  tcfg.eval_every = kDesk.account_steps;
  tcfg.eval_size = 50;

  const auto g = run_cached(gcfg, run_tag(gcfg));
  const auto s = run_cached(scfg, run_tag(scfg));
  const auto t = run_cached(tcfg, run_tag(tcfg));
  total += g.elapsed_s + s.elapsed_s + t.elapsed_s;

  const double mg = token_accounting(g.rows, kDesk.account_steps);
  const double ms = token_accounting(s.rows, kDesk.account_steps);
  const double mt = token_accounting(t.rows, kDesk.account_steps);
  const std::string nums = "mean tokens/example grpo " + fmt(mg, 1) +
                           ", sgrpo " + fmt(ms, 1) + " (" + fmt(ms / mg, 3) +
                           "x), tspmo " + fmt(mt, 1) + " (" + fmt(mt / mg, 3) +
                           "x)";
  if (!(mt < 0.10 * mg)) return {false, nums + "; tspmo not under 0.10x"};
  if (!(ms < 0.60 * mg)) return {false, nums + "; sgrpo not under 0.60x"};
  if (total >= 1800.0)
    return {false, nums + "; took " + fmt(total, 0) + "s, budget 1800s"};
  return {true, nums + ", " + fmt(total, 0) + "s"};
}

// --------------------------------------------------------------- check 9

Outcome check_determinism(const fs::path& work) {
  RunConfig cfg;
  cfg.task = "mult-2x1";
  cfg.algo = "tspmo";
  cfg.seed = 33;
  cfg.steps = 12;
  cfg.group_size = 8;
  cfg.max_tokens = 48;
  cfg.layers = 1;
  cfg.width = 64;
  cfg.heads = 4;
  cfg.ffw = 128;
  cfg.max_context = 128;
  cfg.eval_size = 8;
  cfg.eval_every = 6;
  cfg.checkpoint_every = 100;

  std::string bytes[2];
  for (int r = 0; r < 2; ++r) {
    const fs::path dir = work / "det" / (r == 0 ? "a" : "b");
    fs::remove_all(dir);
    cfg.out_dir = dir.string();
    const auto tr = train(cfg);
    if (tr.aborted) return {false, "run aborted"};
    bytes[r] = slurp(tr.metrics_path);
    bytes[r] += "|" + slurp(tr.checkpoint_path);
  }
  if (bytes[0] != bytes[1])
    return {false, "metrics or checkpoint bytes differ between twin runs"};
  return {true, "twin 12-step runs agree byte for byte (metrics and "
                "checkpoint)"};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance gate"};
  std::string work_dir = "acceptance_work";
  std::string only;
  app.add_option("--work-dir", work_dir,
                 "directory for cached desk-scale artifacts");
  app.add_option("--only", only, "comma-separated subset of check numbers");
  CLI11_PARSE(app, argc, argv);

  const fs::path work = work_dir;
  std::error_code ec;
  fs::create_directories(work, ec);

  struct Check {
    int id;
    const char* name;
    std::function<Outcome()> run;
  };
  const std::vector<Check> checks = {
      {1, "trie advantages match an exhaustive rescan oracle",
       [] { return check_trie_oracle(); }},
      {2, "loss gradients match central finite differences",
       [] { return check_finite_differences(); }},
      {3, "loss identities hold (all-token, score form, divergence sign)",
       [] { return check_identities(); }},
      {4, "token selection obeys the forced-prefix, cap, and rate laws",
       [] { return check_selection_law(); }},
      {5, "group advantages normalize exactly",
       [] { return check_advantage_normalization(); }},
      {6, "answer parsing matches the golden table",
       [] { return check_parser_golden(); }},
      {7, "desk-scale training lifts held-out accuracy",
       [&] { return check_desk_training(work); }},
      {8, "gradient-token accounting separates the algorithms",
       [&] { return check_token_accounting(work); }},
      {9, "identical configs reproduce byte-identical metrics",
       [&] { return check_determinism(work); }},
  };

  std::set<int> wanted;
  if (!only.empty()) {
    std::stringstream ss(only);
    std::string tok;
    while (std::getline(ss, tok, ',')) wanted.insert(std::stoi(tok));
  }

  int failures = 0;
  for (const auto& c : checks) {
    if (!wanted.empty() && !wanted.count(c.id)) continue;
    Outcome out;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      out = c.run();
    } catch (const std::exception& e) {
      out = {false, std::string("exception: ") + e.what()};
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    std::printf("[%s] %d. %s: %s (%.1fs)\n", out.pass ? "PASS" : "FAIL",
                c.id, c.name, out.detail.c_str(), secs);
    std::fflush(stdout);
    if (!out.pass) ++failures;
  }
  return failures == 0 ? 0 : 1;
}
