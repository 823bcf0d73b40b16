#pragma once

// Decoder-only transformer with optional low-rank adapters on the query and
// value projections of the trailing layers.
//
// The differentiable forward always runs on a fixed-height canvas: token ids
// are padded with -1 (zero embedding rows) and attention scores outside the
// causal window get -1e9 before the row softmax, which underflows to an exact
// 0 weight. At a fixed shape the matrix kernels are row-content independent,
// so logits at position t are bit-identical no matter what sits above t. The
// sampler is a separate per-row incremental path over cached keys/values; it
// agrees with the canvas forward to rounding, and every objective recomputes
// log-probabilities through the canvas graph, so the sampler's rounding never
// enters a gradient.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "tcl/adamw.hpp"
#include "tcl/rng.hpp"
#include "tcl/tape.hpp"
#include "tcl/vocab.hpp"

namespace tcl {

using ad::Tape;
using ad::Tensor;

struct ModelConfig {
  int layers = 4;
  int width = 128;
  int heads = 4;
  int ffw = 512;
  int max_context = 384;
  int vocab_size = 0;

  void validate() const {
    check(layers >= 1 && width >= 1 && heads >= 1 && ffw >= 1 &&
              max_context >= 1,
          "model config: all dimensions must be positive");
    check(width % heads == 0, "model config: width not divisible by heads");
    check(vocab_size >= 4 && vocab_size <= Vocabulary::kMaxSize,
          "model config: vocab size out of range");
  }
  int head_dim() const { return width / heads; }
};

enum class StopReason { eos, length_cap };

// One sampled trajectory. Log-probabilities are recorded at temperature 1
// regardless of the sampling temperature.
struct Completion {
  std::vector<int> prompt;
  std::vector<int> gen;
  std::vector<double> logprobs;
  StopReason stopped = StopReason::length_cap;
  std::optional<double> reward;

  int t_prompt() const { return static_cast<int>(prompt.size()); }
  int t_total() const { return static_cast<int>(prompt.size() + gen.size()); }
};

namespace model_detail {

constexpr double kMaskFill = -1e9;

// Canvas heights snap to the next multiple of 64 (capped at max context) so
// repeated shapes reuse the same kernel dispatch while short sequences stay
// cheap.
inline int bucket_height(int n, int cap) {
  int h = ((n + 63) / 64) * 64;
  return std::min(std::max(h, 64), cap);
}

// 53-bit uniform in [0,1); pinned to the engine output so draws do not
// depend on library distribution internals.
inline double unit_uniform(std::mt19937_64& g) {
  return static_cast<double>(g() >> 11) * 0x1.0p-53;
}

}  // namespace model_detail

template <class T>
struct TransformerBlock {
  Tensor<T> ln1_g, wq, wk, wv, wo;
  Tensor<T> ln2_g, w1, w2;
  // Adapter factors; undefined when the layer is not adapted.
  Tensor<T> q_lora_a, q_lora_b, v_lora_a, v_lora_b;
  bool adapted = false;
};

// Per-layer key/value rows accumulated during incremental sampling.
template <class T>
struct KvCache {
  int len = 0;
  std::vector<ad::EMat<T>> k, v;
};

template <class T>
class Transformer {
 public:
  Transformer(const ModelConfig& cfg, uint64_t init_seed) : cfg_(cfg) {
    cfg_.validate();
    std::mt19937_64 g = make_rng(init_seed, Stream::param_init);
    wte_ = init_weight(cfg_.vocab_size, cfg_.width, g, "wte");
    wpe_ = init_weight(cfg_.max_context, cfg_.width, g, "wpe");
    blocks_.resize(cfg_.layers);
    for (int i = 0; i < cfg_.layers; ++i) {
      auto& b = blocks_[i];
      const std::string p = "layers." + std::to_string(i) + ".";
      b.ln1_g = init_gain(p + "ln1.g");
      b.wq = init_weight(cfg_.width, cfg_.width, g, p + "attn.wq");
      b.wk = init_weight(cfg_.width, cfg_.width, g, p + "attn.wk");
      b.wv = init_weight(cfg_.width, cfg_.width, g, p + "attn.wv");
      b.wo = init_weight(cfg_.width, cfg_.width, g, p + "attn.wo");
      b.ln2_g = init_gain(p + "ln2.g");
      b.w1 = init_weight(cfg_.width, cfg_.ffw, g, p + "ffn.w1");
      b.w2 = init_weight(cfg_.ffw, cfg_.width, g, p + "ffn.w2");
    }
    ln_f_g_ = init_gain("ln_f.g");
    lm_head_ = init_weight(cfg_.width, cfg_.vocab_size, g, "lm_head");
    base_param_count_ = params_.size();
  }

  const ModelConfig& config() const { return cfg_; }
  std::vector<Tensor<T>> parameters() const { return params_; }
  std::vector<Tensor<T>> trainable_parameters() const {
    std::vector<Tensor<T>> out;
    for (const auto& p : params_)
      if (p.requires_grad()) out.push_back(p);
    return out;
  }
  bool has_adapters() const { return params_.size() > base_param_count_; }

  // Adapters go on the query and value projections of the last
  // ceil(fraction * layers) layers. B starts at zero so the adapted model is
  // bit-identical to the base; the base weights freeze.
  void attach_lora(double fraction, int rank, T scaling, uint64_t seed) {
    check(!has_adapters(), "attach_lora: adapters already attached");
    check(fraction > 0.0 && fraction <= 1.0,
          "attach_lora: fraction must be in (0, 1]");
    check(rank >= 1, "attach_lora: rank must be positive");
    check(rank <= cfg_.width, "attach_lora: rank exceeds model width");
    const int n = static_cast<int>(
        std::ceil(fraction * static_cast<double>(cfg_.layers)));
    std::mt19937_64 g = make_rng(seed, Stream::param_init, 1);
    for (auto& p : params_) p.set_requires_grad(false);
    lora_scaling_ = scaling;
    first_adapted_layer_ = cfg_.layers - n;
    for (int i = first_adapted_layer_; i < cfg_.layers; ++i) {
      auto& b = blocks_[i];
      const std::string p = "layers." + std::to_string(i) + ".attn.";
      b.q_lora_a = init_lora_a(rank, g, p + "wq.lora_a");
      b.q_lora_b = init_zero(rank, cfg_.width, p + "wq.lora_b");
      b.v_lora_a = init_lora_a(rank, g, p + "wv.lora_a");
      b.v_lora_b = init_zero(rank, cfg_.width, p + "wv.lora_b");
      b.adapted = true;
    }
  }
  int first_adapted_layer() const { return first_adapted_layer_; }

  // Copy of the base weights with no adapters attached (the frozen reference
  // policy). Adapter deltas are NOT folded in.
  Transformer clone_base() const {
    Transformer out(cfg_, 0);
    for (size_t i = 0; i < out.params_.size(); ++i) {
      std::copy(params_[i].data(), params_[i].data() + params_[i].size(),
                out.params_[i].data());
      out.params_[i].set_requires_grad(false);
    }
    return out;
  }

  // Differentiable forward over an explicit canvas: ids/positions are padded
  // with -1 and mask is an additive [h, h] score offset. Returns [h, vocab].
  Tensor<T> forward_canvas(Tape<T>* tape, const std::vector<int>& ids,
                           const std::vector<int>& positions,
                           const Tensor<T>& mask) {
    const int h = static_cast<int>(ids.size());
    check(h >= 1 && h <= cfg_.max_context, "forward: canvas height out of range");
    check(positions.size() == ids.size(), "forward: position list mismatch");
    check(mask.rows() == h && mask.cols() == h, "forward: mask shape mismatch");
    const int dh = cfg_.head_dim();
    const T inv_sqrt_dh = T(1) / std::sqrt(static_cast<T>(dh));

    auto x = ad::add(tape, ad::embed(tape, wte_, ids),
                     ad::embed(tape, wpe_, positions));
    for (auto& b : blocks_) {
      auto hn = ad::layer_norm(tape, x, b.ln1_g);
      auto q = project(tape, hn, b.wq, b.adapted ? &b.q_lora_a : nullptr,
                       b.adapted ? &b.q_lora_b : nullptr);
      auto k = ad::matmul(tape, hn, b.wk);
      auto v = project(tape, hn, b.wv, b.adapted ? &b.v_lora_a : nullptr,
                       b.adapted ? &b.v_lora_b : nullptr);
      std::vector<Tensor<T>> head_out;
      for (int hd = 0; hd < cfg_.heads; ++hd) {
        auto qh = ad::slice_cols(tape, q, hd * dh, (hd + 1) * dh);
        auto kh = ad::slice_cols(tape, k, hd * dh, (hd + 1) * dh);
        auto vh = ad::slice_cols(tape, v, hd * dh, (hd + 1) * dh);
        auto scores =
            ad::add(tape, ad::scale(tape, ad::matmul_nt(tape, qh, kh), inv_sqrt_dh),
                    mask);
        head_out.push_back(
            ad::matmul(tape, ad::softmax_rows(tape, scores), vh));
      }
      auto attn = ad::matmul(tape, ad::concat_cols(tape, head_out), b.wo);
      x = ad::add(tape, x, attn);
      auto h2 = ad::layer_norm(tape, x, b.ln2_g);
      auto ff = ad::matmul(tape, ad::relu(tape, ad::matmul(tape, h2, b.w1)), b.w2);
      x = ad::add(tape, x, ff);
    }
    x = ad::layer_norm(tape, x, ln_f_g_);
    return ad::matmul(tape, x, lm_head_);
  }

  // Next-token logits for every position of a real sequence. Always computes
  // on the full max-context canvas so appending tokens cannot perturb earlier
  // rows even across size buckets.
  Tensor<T> forward_logits(Tape<T>* tape, const std::vector<int>& ids) {
    const int n = static_cast<int>(ids.size());
    check(n >= 1, "forward: empty sequence");
    check(n <= cfg_.max_context, "forward: sequence exceeds max context");
    validate_ids(ids);
    const int h = cfg_.max_context;
    std::vector<int> padded(h, -1), positions(h, -1);
    std::copy(ids.begin(), ids.end(), padded.begin());
    for (int i = 0; i < n; ++i) positions[i] = i;
    auto logits = forward_canvas(tape, padded, positions, causal_mask(h));
    return ad::slice_rows(tape, logits, 0, n);
  }

  // log softmax(forward_logits(context))[last][token]; differentiable.
  Tensor<T> token_logprob(Tape<T>* tape, const std::vector<int>& context,
                          int token) {
    check(!context.empty(), "token_logprob: empty context");
    check(token >= 0 && token < cfg_.vocab_size,
          "token_logprob: token out of vocabulary");
    auto logits = forward_logits(tape, context);
    auto last = ad::slice_rows(tape, logits, logits.rows() - 1, logits.rows());
    return ad::pick(tape, ad::log_softmax_rows(tape, last), {0}, {token});
  }

  // [n_gen, 1] log-probabilities of each generated token given its prefix,
  // evaluated in one bucketed forward. The training-side counterpart of
  // token_logprob.
  Tensor<T> seq_logprobs(Tape<T>* tape, const std::vector<int>& prompt,
                         const std::vector<int>& gen) {
    check(!prompt.empty(), "seq_logprobs: empty prompt");
    check(!gen.empty(), "seq_logprobs: no generated tokens");
    const int np = static_cast<int>(prompt.size());
    const int ng = static_cast<int>(gen.size());
    const int n = np + ng;
    check(n <= cfg_.max_context, "seq_logprobs: sequence exceeds max context");
    std::vector<int> ids(prompt);
    ids.insert(ids.end(), gen.begin(), gen.end());
    validate_ids(ids);
    const int h = model_detail::bucket_height(n, cfg_.max_context);
    std::vector<int> padded(h, -1), positions(h, -1);
    std::copy(ids.begin(), ids.end(), padded.begin());
    for (int i = 0; i < n; ++i) positions[i] = i;
    auto logits = forward_canvas(tape, padded, positions, causal_mask(h));
    auto rows = ad::slice_rows(tape, logits, np - 1, n - 1);
    std::vector<int> ri(ng), ci(gen);
    for (int i = 0; i < ng; ++i) ri[i] = i;
    return ad::pick(tape, ad::log_softmax_rows(tape, rows), ri, ci);
  }

  // ------------------------- incremental sampler -------------------------

  KvCache<T> make_cache() const {
    KvCache<T> c;
    c.k.assign(cfg_.layers, ad::EMat<T>::Zero(cfg_.max_context, cfg_.width));
    c.v.assign(cfg_.layers, ad::EMat<T>::Zero(cfg_.max_context, cfg_.width));
    return c;
  }

  // Processes one token at the cache's current position and returns the
  // next-token logits row. Mirrors forward_canvas arithmetic per row.
  void row_forward(KvCache<T>& cache, int token,
                   Eigen::Matrix<T, 1, Eigen::Dynamic>& logits) const {
    check(cache.len < cfg_.max_context, "sampler: context is full");
    const int pos = cache.len;
    const int dh = cfg_.head_dim();
    const T inv_sqrt_dh = T(1) / std::sqrt(static_cast<T>(dh));
    using RowV = Eigen::Matrix<T, 1, Eigen::Dynamic>;
    RowV x = wte_.mat().row(token) + wpe_.mat().row(pos);
    RowV hn(cfg_.width), q(cfg_.width), attn(cfg_.width);
    for (int l = 0; l < cfg_.layers; ++l) {
      const auto& b = blocks_[l];
      norm_row(x, b.ln1_g, hn);
      q.noalias() = hn * b.wq.mat();
      if (b.adapted)
        q.noalias() += (hn * b.q_lora_a.mat()) * b.q_lora_b.mat() * lora_scaling_;
      cache.k[l].row(pos).noalias() = hn * b.wk.mat();
      cache.v[l].row(pos).noalias() = hn * b.wv.mat();
      if (b.adapted)
        cache.v[l].row(pos).noalias() +=
            (hn * b.v_lora_a.mat()) * b.v_lora_b.mat() * lora_scaling_;
      for (int hd = 0; hd < cfg_.heads; ++hd) {
        auto kh = cache.k[l].block(0, hd * dh, pos + 1, dh);
        auto vh = cache.v[l].block(0, hd * dh, pos + 1, dh);
        Eigen::Matrix<T, Eigen::Dynamic, 1> s =
            kh * q.segment(hd * dh, dh).transpose() * inv_sqrt_dh;
        const T m = s.maxCoeff();
        T total = 0;
        for (int i = 0; i <= pos; ++i) {
          s[i] = std::exp(s[i] - m);
          total += s[i];
        }
        attn.segment(hd * dh, dh).noalias() = (s / total).transpose() * vh;
      }
      x.noalias() += attn * b.wo.mat();
      norm_row(x, b.ln2_g, hn);
      x.noalias() += (hn * b.w1.mat()).cwiseMax(T(0)) * b.w2.mat();
    }
    norm_row(x, ln_f_g_, hn);
    logits.noalias() = hn * lm_head_.mat();
    cache.len = pos + 1;
  }

  // Runs the whole prompt through the cache; returns the logits row that
  // predicts the first generated token.
  Eigen::Matrix<T, 1, Eigen::Dynamic> prefill(KvCache<T>& cache,
                                              const std::vector<int>& prompt) const {
    check(!prompt.empty(), "sampler: empty prompt");
    check(static_cast<int>(prompt.size()) <= cfg_.max_context,
          "sampler: prompt exceeds max context");
    validate_ids(prompt);
    Eigen::Matrix<T, 1, Eigen::Dynamic> logits(cfg_.vocab_size);
    for (int tok : prompt) row_forward(cache, tok, logits);
    return logits;
  }

  Completion sample_completion(const std::vector<int>& prompt, double temperature,
                               int max_tokens, std::mt19937_64& rng,
                               bool greedy = false) const {
    check(greedy || temperature > 0.0, "sampler: temperature must be positive");
    check(max_tokens >= 1 && max_tokens <= 300,
          "sampler: max_tokens must be in [1, 300]");
    KvCache<T> cache = make_cache();
    if (static_cast<int>(prompt.size()) == cfg_.max_context) {
      // no room to place even one generated token
      Completion c;
      c.prompt = prompt;
      c.stopped = StopReason::length_cap;
      return c;
    }
    auto logits = prefill(cache, prompt);
    return continue_from(cache, logits, prompt, temperature, max_tokens, rng,
                         greedy);
  }

  // Samples n completions of one prompt, prefilling the shared prompt once.
  // seeds[i] drives completion i's draws, so members are independent.
  std::vector<Completion> sample_group(const std::vector<int>& prompt, int n,
                                       double temperature, int max_tokens,
                                       const std::vector<uint64_t>& seeds) const {
    check(n >= 1 && static_cast<int>(seeds.size()) == n,
          "sampler: need one seed per group member");
    check(temperature > 0.0, "sampler: temperature must be positive");
    check(max_tokens >= 1 && max_tokens <= 300,
          "sampler: max_tokens must be in [1, 300]");
    std::vector<Completion> out;
    out.reserve(n);
    if (static_cast<int>(prompt.size()) == cfg_.max_context) {
      for (int i = 0; i < n; ++i) {
        Completion c;
        c.prompt = prompt;
        c.stopped = StopReason::length_cap;
        out.push_back(std::move(c));
      }
      return out;
    }
    KvCache<T> shared = make_cache();
    auto logits = prefill(shared, prompt);
    for (int i = 0; i < n; ++i) {
      KvCache<T> cache = shared;
      auto row = logits;
      std::mt19937_64 rng(seeds[i]);
      out.push_back(continue_from(cache, row, prompt, temperature, max_tokens,
                                  rng, false));
    }
    return out;
  }

 private:
  Tensor<T> init_weight(int r, int c, std::mt19937_64& g, const std::string& name) {
    Tensor<T> t = Tensor<T>::zeros(r, c, true);
    std::normal_distribution<double> dist(0.0, 0.02);
    for (size_t i = 0; i < t.size(); ++i)
      t.data()[i] = static_cast<T>(dist(g));
    t.set_name(name);
    params_.push_back(t);
    return t;
  }
  // fan-in kaiming-uniform, the reference adapter init; keeps the down
  // projection an O(1) operator so the zero-started factor trains at a
  // usable scale
  Tensor<T> init_lora_a(int rank, std::mt19937_64& g,
                        const std::string& name) {
    Tensor<T> t = Tensor<T>::zeros(cfg_.width, rank, true);
    const double bound = 1.0 / std::sqrt(static_cast<double>(cfg_.width));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (size_t i = 0; i < t.size(); ++i)
      t.data()[i] = static_cast<T>(dist(g));
    t.set_name(name);
    params_.push_back(t);
    return t;
  }
  Tensor<T> init_gain(const std::string& name) {
    Tensor<T> t = Tensor<T>::zeros(1, cfg_.width, true);
    std::fill(t.data(), t.data() + t.size(), T(1));
    t.set_name(name);
    params_.push_back(t);
    return t;
  }
  Tensor<T> init_zero(int r, int c, const std::string& name) {
    Tensor<T> t = Tensor<T>::zeros(r, c, true);
    t.set_name(name);
    params_.push_back(t);
    return t;
  }

  void validate_ids(const std::vector<int>& ids) const {
    for (int id : ids)
      check(id >= 0 && id < cfg_.vocab_size, "forward: token id out of vocabulary");
  }

  Tensor<T> project(Tape<T>* tape, Tensor<T> x, Tensor<T> w, Tensor<T>* la,
                    Tensor<T>* lb) {
    auto out = ad::matmul(tape, x, w);
    if (la) {
      auto delta = ad::matmul(tape, ad::matmul(tape, x, *la), *lb);
      out = ad::add(tape, out, ad::scale(tape, delta, lora_scaling_));
    }
    return out;
  }

  // Additive causal mask for a full canvas of height h, cached per height.
  const Tensor<T>& causal_mask(int h) {
    auto it = mask_cache_.find(h);
    if (it != mask_cache_.end()) return it->second;
    Tensor<T> m = Tensor<T>::zeros(h, h);
    for (int i = 0; i < h; ++i)
      for (int j = i + 1; j < h; ++j)
        m.data()[static_cast<size_t>(i) * h + j] =
            static_cast<T>(model_detail::kMaskFill);
    return mask_cache_.emplace(h, std::move(m)).first->second;
  }

  template <class Row>
  void norm_row(const Row& x, const Tensor<T>& gain,
                Eigen::Matrix<T, 1, Eigen::Dynamic>& out) const {
    // population variance with the same 1e-5 epsilon as the graph op
    const T mu = x.mean();
    T var = 0;
    for (int i = 0; i < x.size(); ++i) var += (x[i] - mu) * (x[i] - mu);
    var /= static_cast<T>(x.size());
    const T inv = T(1) / std::sqrt(var + static_cast<T>(1e-5));
    out = ((x.array() - mu) * inv).matrix().cwiseProduct(gain.mat().row(0));
  }

  Completion continue_from(KvCache<T>& cache,
                           Eigen::Matrix<T, 1, Eigen::Dynamic>& logits,
                           const std::vector<int>& prompt, double temperature,
                           int max_tokens, std::mt19937_64& rng,
                           bool greedy) const {
    Completion c;
    c.prompt = prompt;
    c.stopped = StopReason::length_cap;
    while (true) {
      const int tok = greedy ? argmax_row(logits)
                             : draw_token(logits, temperature, rng);
      c.gen.push_back(tok);
      c.logprobs.push_back(logprob_temp1(logits, tok));
      if (tok == Vocabulary::kEos) {
        c.stopped = StopReason::eos;
        break;
      }
      if (static_cast<int>(c.gen.size()) >= max_tokens) break;
      if (c.t_total() >= cfg_.max_context) break;
      row_forward(cache, tok, logits);
    }
    return c;
  }

  static int argmax_row(const Eigen::Matrix<T, 1, Eigen::Dynamic>& logits) {
    int best = 0;
    for (int i = 1; i < logits.size(); ++i)
      if (logits[i] > logits[best]) best = i;
    return best;
  }

  // Inverse-CDF draw from softmax(logits / temperature), accumulated in
  // index order with double precision so the draw is a pure function of the
  // logits and the raw engine output.
  static int draw_token(const Eigen::Matrix<T, 1, Eigen::Dynamic>& logits,
                        double temperature, std::mt19937_64& rng) {
    const int v = static_cast<int>(logits.size());
    const double m = static_cast<double>(logits.maxCoeff());
    std::vector<double> w(v);
    double total = 0.0;
    for (int i = 0; i < v; ++i) {
      w[i] = std::exp((static_cast<double>(logits[i]) - m) / temperature);
      total += w[i];
    }
    const double u = model_detail::unit_uniform(rng) * total;
    double acc = 0.0;
    for (int i = 0; i < v; ++i) {
      acc += w[i];
      if (u < acc) return i;
    }
    return v - 1;
  }

  static double logprob_temp1(const Eigen::Matrix<T, 1, Eigen::Dynamic>& logits,
                              int tok) {
    const double m = static_cast<double>(logits.maxCoeff());
    double total = 0.0;
    for (int i = 0; i < logits.size(); ++i)
      total += std::exp(static_cast<double>(logits[i]) - m);
    return static_cast<double>(logits[tok]) - m - std::log(total);
  }

  ModelConfig cfg_;
  Tensor<T> wte_, wpe_, ln_f_g_, lm_head_;
  std::vector<TransformerBlock<T>> blocks_;
  std::vector<Tensor<T>> params_;
  size_t base_param_count_ = 0;
  int first_adapted_layer_ = -1;
  T lora_scaling_ = T(1);
  std::map<int, Tensor<T>> mask_cache_;
};

// ------------------------- supervised pretraining -------------------------

struct PretrainExample {
  std::vector<int> prompt;
  std::vector<int> target;  // usually ends with the end-of-sequence id
};

// Full-parameter next-token cross-entropy over target spans. Examples are
// packed into one max-context canvas per step with a block-diagonal causal
// mask and per-example position restart, so short sequences do not waste the
// canvas. Returns the per-step loss history.
template <class T>
std::vector<double> pretrain_supervised(Transformer<T>& model,
                                        const std::vector<PretrainExample>& data,
                                        int steps, double lr, uint64_t seed) {
  check(!data.empty(), "pretrain: empty dataset");
  check(steps >= 0, "pretrain: negative step count");
  check(!model.has_adapters(), "pretrain: model already has adapters");
  const int h = model.config().max_context;
  for (const auto& ex : data) {
    check(!ex.prompt.empty() && !ex.target.empty(),
          "pretrain: example with empty span");
    check(static_cast<int>(ex.prompt.size() + ex.target.size()) <= h,
          "pretrain: example exceeds max context");
  }
  typename ad::AdamW<T>::Params opt_p;
  opt_p.lr = static_cast<T>(lr);
  ad::AdamW<T> opt(model.trainable_parameters(), opt_p);
  std::mt19937_64 order = make_rng(seed, Stream::pretrain_order);

  std::vector<size_t> perm(data.size());
  for (size_t i = 0; i < perm.size(); ++i) perm[i] = i;
  size_t cursor = perm.size();  // forces a shuffle on first use
  auto peek_index = [&]() {
    if (cursor == perm.size()) {
      for (size_t i = perm.size(); i > 1; --i)
        std::swap(perm[i - 1], perm[order() % i]);
      cursor = 0;
    }
    return perm[cursor];
  };

  std::vector<double> history;
  history.reserve(steps);
  for (int step = 0; step < steps; ++step) {
    std::vector<int> ids(h, -1), positions(h, -1);
    Tensor<T> mask = Tensor<T>::zeros(h, h);
    std::fill(mask.data(), mask.data() + mask.size(),
              static_cast<T>(model_detail::kMaskFill));
    std::vector<int> trows, tcols;
    int at = 0;
    while (true) {
      const auto& ex = data[peek_index()];
      const int len = static_cast<int>(ex.prompt.size() + ex.target.size());
      if (at + len > h) break;  // example stays queued for the next pack
      ++cursor;
      for (int i = 0; i < len; ++i) {
        ids[at + i] = i < static_cast<int>(ex.prompt.size())
                          ? ex.prompt[i]
                          : ex.target[i - ex.prompt.size()];
        positions[at + i] = i;
        for (int j = 0; j <= i; ++j)
          mask.data()[static_cast<size_t>(at + i) * h + at + j] = T(0);
      }
      const int np = static_cast<int>(ex.prompt.size());
      for (size_t j = 0; j < ex.target.size(); ++j) {
        trows.push_back(at + np - 1 + static_cast<int>(j));
        tcols.push_back(ex.target[j]);
      }
      at += len;
      if (at >= h) break;
    }
    check(!trows.empty(), "pretrain: empty pack");

    Tape<T> tape;
    auto logits = model.forward_canvas(&tape, ids, positions, mask);
    auto lp = ad::pick(&tape, ad::log_softmax_rows(&tape, logits), trows, tcols);
    auto loss = ad::scale(&tape, ad::sum_all(&tape, lp),
                          T(-1) / static_cast<T>(trows.size()));
    tape.backward(loss);
    opt.step();
    opt.zero_grad();
    history.push_back(static_cast<double>(loss.item()));
  }
  return history;
}

}  // namespace tcl
