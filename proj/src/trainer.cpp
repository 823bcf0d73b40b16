#include "tcl/trainer.hpp"

#include <chrono>
#include <cmath>
#include <deque>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "tcl/checkpoint.hpp"
#include "tcl/common.hpp"
#include "tcl/corpus.hpp"
#include "tcl/plots.hpp"
#include "tcl/rl.hpp"
#include "tcl/rng.hpp"

namespace tcl {

// --------------------------- problem sources ---------------------------

ProblemSource::ProblemSource(const std::string& task,
                             const std::string& svamp_path)
    : task_(task) {
  if (task == "wordprob") return;
  if (task == "svamp-file") {
    check(!svamp_path.empty(), "trainer: svamp-file task needs a path");
    fixed_ = load_svamp(svamp_path);
    check(!fixed_.empty(), "trainer: svamp file has no usable records");
    return;
  }
  const auto [da, db] = parse_mult_task_name(task);
  digits_a_ = da;
  digits_b_ = db;
}

Problem ProblemSource::draw(std::mt19937_64& rng) const {
  if (task_ == "wordprob") return gen_word_problem(rng);
  if (task_ == "svamp-file") return fixed_[rng() % fixed_.size()];
  return gen_multiplication(rng, digits_a_, digits_b_);
}

std::vector<Problem> ProblemSource::eval_set(int n, uint64_t master) const {
  check(n >= 1, "trainer: eval set size must be >= 1");
  auto rng = make_rng(master, Stream::eval_set);
  if (task_ == "svamp-file") {
    if (static_cast<size_t>(n) >= fixed_.size()) return fixed_;
    std::vector<size_t> pool(fixed_.size());
    for (size_t i = 0; i < pool.size(); ++i) pool[i] = i;
    std::vector<Problem> out;
    for (size_t idx : sample_without_replacement(pool, n, rng))
      out.push_back(fixed_[idx]);
    return out;
  }
  std::vector<Problem> out;
  out.reserve(n);
  for (int i = 0; i < n; ++i) out.push_back(draw(rng));
  return out;
}

// ------------------------------ evaluation ------------------------------

EvalOutcome evaluate(const Transformer<float>& model, const Vocabulary& vocab,
                     const std::vector<Problem>& problems, double temperature,
                     int max_tokens, bool greedy, uint64_t seed) {
  check(!problems.empty(), "evaluate: empty problem set");
  EvalOutcome out;
  double sum = 0.0;
  for (size_t i = 0; i < problems.size(); ++i) {
    const std::vector<int> ids = vocab.encode(problems[i].prompt);
    auto rng = make_rng(seed, Stream::eval_set, i, 1);
    const Completion c =
        model.sample_completion(ids, temperature, max_tokens, rng, greedy);
    const std::string text = vocab.decode(c.gen);
    const double r = reward(text, problems[i]);
    sum += r;
    out.rewards.push_back(r);
    out.texts.push_back(text);
  }
  out.accuracy = sum / static_cast<double>(problems.size());
  return out;
}

// ------------------------------- helpers -------------------------------

namespace {

ModelConfig model_config_for(const RunConfig& cfg, const Vocabulary& vocab) {
  ModelConfig mc;
  mc.layers = cfg.layers;
  mc.width = cfg.width;
  mc.heads = cfg.heads;
  mc.ffw = cfg.ffw;
  mc.max_context = cfg.max_context;
  mc.vocab_size = vocab.size();
  return mc;
}

Vocabulary vocab_for(const RunConfig& cfg) {
  return cfg.vocab_path.empty() ? make_default_vocab()
                                : Vocabulary::load(cfg.vocab_path);
}

void scale_grads(std::vector<ad::Tensor<float>> params, float s) {
  for (auto& p : params) {
    if (p.grad_data() == nullptr) continue;
    float* g = p.grad();
    for (size_t i = 0; i < p.size(); ++i) g[i] *= s;
  }
}

void save_params(const Transformer<float>& model, const std::string& path) {
  const std::vector<ad::Tensor<float>> ps = model.parameters();
  ad::save_checkpoint(path, ps);
}

}  // namespace

Transformer<float> load_model(const RunConfig& cfg, const Vocabulary& vocab,
                              const std::string& checkpoint_path) {
  const ModelConfig mc = model_config_for(cfg, vocab);
  Transformer<float> full(mc, derive_seed(cfg.seed, Stream::param_init));
  full.attach_lora(cfg.lora_fraction, cfg.lora_rank,
                   static_cast<float>(cfg.lora_scaling),
                   derive_seed(cfg.seed, Stream::param_init, 1));
  try {
    std::vector<ad::Tensor<float>> ps = full.parameters();
    ad::load_checkpoint(checkpoint_path, ps);
    return full;
  } catch (const IoError&) {
    // fall through: warmup checkpoints carry base parameters only
  }
  Transformer<float> base(mc, derive_seed(cfg.seed, Stream::param_init));
  std::vector<ad::Tensor<float>> ps = base.parameters();
  ad::load_checkpoint(checkpoint_path, ps);
  return base;
}

// -------------------------------- training --------------------------------

TrainResult train(const RunConfig& cfg) {
  validate_run_config(cfg);
  const Vocabulary vocab = vocab_for(cfg);
  const ModelConfig mc = model_config_for(cfg, vocab);

  Transformer<float> model(mc, derive_seed(cfg.seed, Stream::param_init));
  if (!cfg.base_checkpoint.empty()) {
    std::vector<ad::Tensor<float>> ps = model.parameters();
    ad::load_checkpoint(cfg.base_checkpoint, ps);
  }
  // the frozen reference policy is the base model before adapters are added
  Transformer<float> ref = model.clone_base();
  model.attach_lora(cfg.lora_fraction, cfg.lora_rank,
                    static_cast<float>(cfg.lora_scaling),
                    derive_seed(cfg.seed, Stream::param_init, 1));

  ad::AdamW<float>::Params op;
  op.lr = static_cast<float>(cfg.lr);
  op.beta1 = static_cast<float>(cfg.adam_beta1);
  op.beta2 = static_cast<float>(cfg.adam_beta2);
  op.eps = static_cast<float>(cfg.adam_eps);
  ad::AdamW<float> opt(model.trainable_parameters(), op);

  const ProblemSource source(cfg.task, cfg.svamp_path);
  const std::vector<Problem> eval_problems =
      source.eval_set(cfg.eval_size, cfg.seed);

  std::filesystem::create_directories(cfg.out_dir);
  save_run_config(cfg, cfg.out_dir + "/config.txt");
  MetricsWriter writer(cfg.out_dir);

  TrainResult result;
  result.metrics_path = writer.metrics_path();
  result.checkpoint_path = cfg.out_dir + "/model.tcl";

  ReplayBuffer buffer(static_cast<size_t>(cfg.replay_capacity),
                      cfg.success_threshold);
  ReplayConfig rcfg;
  rcfg.c_success = cfg.c_success;
  rcfg.c_fail = cfg.c_fail;
  rcfg.group_size = effective_group_size(cfg);
  rcfg.temperature = cfg.temperature;
  rcfg.max_tokens = cfg.max_tokens;
  rcfg.lambda = cfg.lambda;

  const int g = effective_group_size(cfg);
  const int b = cfg.batch_size;
  std::deque<double> rolling;
  std::vector<double> eval_hist;

  for (int s = 0; s < cfg.steps; ++s) {
    const auto t0 = std::chrono::steady_clock::now();
    MetricsRow row;
    row.step = s;
    double reward_sum = 0.0;
    double loss_sum = 0.0;
    bool bad = false;
    std::vector<uint64_t> replayable;
    for (int j = 0; j < b; ++j) {
      const uint64_t pidx = static_cast<uint64_t>(s) * b + j;
      auto prng = make_rng(cfg.seed, Stream::problem, pidx);
      const Problem prob = source.draw(prng);
      const std::vector<int> prompt_ids = vocab.encode(prob.prompt);
      std::vector<uint64_t> seeds(g);
      for (int i = 0; i < g; ++i)
        seeds[i] = derive_seed(cfg.seed, Stream::completion, pidx, i);
      std::vector<Completion> comps = model.sample_group(
          prompt_ids, g, cfg.temperature, cfg.max_tokens, seeds);
      std::vector<double> rewards(comps.size());
      double mean_r = 0.0;
      for (size_t i = 0; i < comps.size(); ++i) {
        rewards[i] = reward(vocab.decode(comps[i].gen), prob);
        comps[i].reward = rewards[i];
        mean_r += rewards[i];
      }
      mean_r /= static_cast<double>(comps.size());
      reward_sum += mean_r;
      const AdvantageResult adv = group_advantages(rewards);
      if (adv.degenerate) ++row.degenerate_groups;
      LossStats st;
      try {
        if (cfg.algo == "grpo") {
          st = grpo_loss(model, ref, comps, adv.advantages, cfg.beta, 0.2);
        } else if (cfg.algo == "sgrpo") {
          auto srng = make_rng(cfg.seed, Stream::selection, pidx);
          const std::vector<TokenSelection> sels =
              make_selections(comps, cfg.alpha, cfg.k, cfg.p, srng);
          st = sgrpo_loss(model, ref, comps, adv.advantages, sels, cfg.beta);
        } else {
          const PrefixTrie trie = build_prefix_trie(comps);
          const std::vector<TransitionAdvantage> recs =
              transition_advantages(trie);
          st = tspmo_loss(model, prompt_ids, recs, cfg.lambda);
          for (Completion& c : comps)
            buffer.add(prob, prompt_ids, std::move(c));
          replayable.push_back(pidx);
        }
      } catch (const NumericError& e) {
        std::cerr << "train: numeric failure at step " << s << ": " << e.what()
                  << "\n";
        bad = true;
        break;
      }
      if (!std::isfinite(st.loss)) {
        std::cerr << "train: non-finite loss at step " << s << "\n";
        bad = true;
        break;
      }
      loss_sum += st.loss;
      row.loss_tokens += st.grad_tokens;
    }
    if (bad) {
      // gradients of the failed step were never applied; drop them and keep
      // the parameters from the last completed step
      opt.zero_grad();
      result.aborted = true;
      break;
    }
    if (b > 1) scale_grads(model.trainable_parameters(), 1.0f / b);
    opt.step();
    opt.zero_grad();
    if (cfg.algo == "tspmo") {
      for (uint64_t pidx : replayable) {
        const ReplayStats rs =
            replay_step(buffer, model, opt, vocab, rcfg, cfg.seed, pidx);
        row.loss_tokens += rs.grad_tokens;
      }
    }
    row.mean_reward = reward_sum / b;
    row.loss = loss_sum / b;
    rolling.push_back(row.mean_reward);
    if (rolling.size() > 25) rolling.pop_front();
    double acc = 0.0;
    for (double v : rolling) acc += v;
    row.train_acc = acc / static_cast<double>(rolling.size());
    const bool do_eval =
        ((s + 1) % cfg.eval_every == 0) || s == cfg.steps - 1;
    if (do_eval) {
      const EvalOutcome ev = evaluate(model, vocab, eval_problems,
                                      cfg.temperature, cfg.max_tokens,
                                      /*greedy=*/true, cfg.seed);
      row.eval_acc = ev.accuracy;
      eval_hist.push_back(ev.accuracy);
      result.final_eval = ev.accuracy;
    }
    row.wall_ms = std::chrono::duration<double, std::milli>(
                      std::chrono::steady_clock::now() - t0)
                      .count();
    writer.append(row);
    result.rows.push_back(row);
    result.steps_done = s + 1;
    if ((s + 1) % cfg.checkpoint_every == 0)
      save_params(model, cfg.out_dir + "/checkpoint_last.tcl");
    if (cfg.plateau_stop && do_eval &&
        plateau_detect(eval_hist, cfg.plateau_window, cfg.plateau_tolerance)) {
      result.plateaued = true;
      break;
    }
  }
  save_params(model, result.checkpoint_path);
  write_run_plots(result.rows, cfg.out_dir + "/plots");
  return result;
}

// -------------------------------- warmup --------------------------------

void pretrain(const RunConfig& cfg) {
  validate_run_config(cfg);
  check(cfg.task != "svamp-file",
        "pretrain: needs a generative task, not a fixed file");
  const Vocabulary vocab = make_default_vocab();
  const ModelConfig mc = model_config_for(cfg, vocab);
  Transformer<float> model(mc, derive_seed(cfg.seed, Stream::param_init));

  std::vector<PretrainExample> data;
  if (cfg.task == "wordprob") {
    data = build_word_corpus(vocab);
  } else {
    const auto [da, db] = parse_mult_task_name(cfg.task);
    CorpusRecipe r;
    r.digits_a = da;
    r.digits_b = db;
    r.verbose_per_fact = cfg.verbose_per_fact;
    r.terse_per_fact = cfg.terse_per_fact;
    data = build_mult_corpus(vocab, r);
  }

  const std::vector<double> losses = pretrain_supervised(
      model, data, cfg.pretrain_steps, cfg.pretrain_lr, cfg.seed);

  std::filesystem::create_directories(cfg.out_dir);
  vocab.save(cfg.out_dir + "/vocab.txt");
  save_params(model, cfg.out_dir + "/base.tcl");
  const std::string loss_path = cfg.out_dir + "/pretrain_loss.csv";
  std::ofstream loss_csv(loss_path, std::ios::trunc);
  if (!loss_csv) throw IoError("pretrain: cannot write " + loss_path);
  loss_csv << "# tcl pretrain v1\nstep,loss\n";
  for (size_t i = 0; i < losses.size(); ++i)
    loss_csv << i << ',' << format_double(losses[i]) << '\n';
  // the saved config points at the artifacts so train can consume the dir
  RunConfig next = cfg;
  next.base_checkpoint = cfg.out_dir + "/base.tcl";
  next.vocab_path = cfg.out_dir + "/vocab.txt";
  save_run_config(next, cfg.out_dir + "/config.txt");
}

// -------------------------------- sweeps --------------------------------

std::vector<SweepCellResult> run_sweep(
    const RunConfig& base,
    const std::vector<std::map<std::string, std::string>>& grid) {
  std::filesystem::create_directories(base.out_dir);
  const std::string path = base.out_dir + "/results.csv";
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("sweep: cannot write " + path);
  out << "# tcl sweep v1\ncell,overrides,status,eval_acc,error\n";
  std::vector<SweepCellResult> rows;
  for (size_t i = 0; i < grid.size(); ++i) {
    SweepCellResult r;
    r.cell = static_cast<int>(i);
    for (const auto& [k, v] : grid[i]) {
      if (!r.overrides.empty()) r.overrides += ' ';
      r.overrides += k + '=' + v;
    }
    try {
      RunConfig cell = base;
      for (const auto& [k, v] : grid[i]) apply_override(cell, k, v);
      cell.seed = derive_seed(base.seed, Stream::sweep_cell, i);
      cell.out_dir = base.out_dir + "/cell_" + std::to_string(i);
      validate_run_config(cell);
      const TrainResult tr = train(cell);
      r.eval_acc = tr.final_eval;
      r.ok = !tr.aborted;
      if (tr.aborted) r.error = "aborted on non-finite loss";
    } catch (const std::exception& e) {
      r.ok = false;
      r.error = e.what();
    }
    std::string clean = r.error;
    for (char& c : clean)
      if (c == '"' || c == '\n') c = '\'';
    out << r.cell << ",\"" << r.overrides << "\","
        << (r.ok ? "ok" : "failed") << ',';
    if (r.eval_acc >= 0.0) out << format_double(r.eval_acc);
    out << ",\"" << clean << "\"\n";
    out.flush();
    rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace tcl
