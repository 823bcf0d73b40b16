// Command-line harness: supervised warmup, policy-gradient training runs,
// held-out evaluation, grid sweeps, and a couple of inspection utilities.
// Every run is a pure function of its config file plus explicit overrides.

#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "tcl/common.hpp"
#include "tcl/corpus.hpp"
#include "tcl/metrics.hpp"
#include "tcl/rl.hpp"
#include "tcl/rng.hpp"
#include "tcl/run_config.hpp"
#include "tcl/trainer.hpp"

namespace {

// One --flag per config key; values land in the map only when given, so file
// settings survive unless explicitly overridden.
struct FlagSet {
  std::map<std::string, std::string> values;
  std::map<std::string, CLI::Option*> options;

  void add(CLI::App* cmd, const std::string& key, const std::string& help) {
    std::string flag = "--" + key;
    for (char& c : flag)
      if (c == '_') c = '-';
    options[key] = cmd->add_option(flag, values[key], help);
  }

  void apply(tcl::RunConfig& cfg) const {
    for (const auto& [key, opt] : options)
      if (opt->count() > 0) tcl::apply_override(cfg, key, values.at(key));
  }
};

void add_run_flags(CLI::App* cmd, FlagSet& fs) {
  fs.add(cmd, "algo", "grpo | sgrpo | tspmo");
  fs.add(cmd, "task", "mult-AxB | wordprob | svamp-file");
  fs.add(cmd, "svamp_path", "json file for the svamp-file task");
  fs.add(cmd, "seed", "master seed");
  fs.add(cmd, "steps", "optimizer steps");
  fs.add(cmd, "alpha", "forced prefix length (sgrpo)");
  fs.add(cmd, "k", "selection cap (sgrpo)");
  fs.add(cmd, "p", "selection probability (sgrpo)");
  fs.add(cmd, "group_size", "completions per prompt (0 = algorithm default)");
  fs.add(cmd, "c_success", "replayed successes per step (tspmo)");
  fs.add(cmd, "c_fail", "replayed failures per step (tspmo)");
  fs.add(cmd, "batch_size", "prompts per optimizer step");
  fs.add(cmd, "beta", "reference-divergence weight");
  fs.add(cmd, "lambda", "weight-decay term (tspmo)");
  fs.add(cmd, "lr", "learning rate");
  fs.add(cmd, "temperature", "sampling temperature");
  fs.add(cmd, "max_tokens", "generation cap");
  fs.add(cmd, "eval_size", "held-out problems");
  fs.add(cmd, "out_dir", "output directory");
  fs.add(cmd, "base_checkpoint", "warmup checkpoint to start from");
  fs.add(cmd, "vocab_path", "symbol table file");
  fs.add(cmd, "pretrain_steps", "warmup steps");
  fs.add(cmd, "pretrain_lr", "warmup learning rate");
  fs.add(cmd, "verbose_per_fact", "worked-solution copies per fact");
  fs.add(cmd, "terse_per_fact", "bare-answer copies per fact");
}

tcl::RunConfig build_config(
    const std::string& config_path, const FlagSet& fs,
    std::vector<std::map<std::string, std::string>>* sweep = nullptr) {
  tcl::ConfigFile file;
  if (!config_path.empty()) file = tcl::load_run_config(config_path);
  fs.apply(file.base);
  if (sweep) *sweep = file.sweep;
  return file.base;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"group-relative policy optimization on a desk-scale model"};
  app.require_subcommand(1);

  std::string config_path;

  auto* c_pre = app.add_subcommand("pretrain", "supervised warmup run");
  FlagSet f_pre;
  c_pre->add_option("--config", config_path, "key = value config file");
  add_run_flags(c_pre, f_pre);

  auto* c_train = app.add_subcommand("train", "policy-gradient run");
  FlagSet f_train;
  c_train->add_option("--config", config_path, "key = value config file");
  add_run_flags(c_train, f_train);

  auto* c_eval = app.add_subcommand("eval", "held-out accuracy of a checkpoint");
  FlagSet f_eval;
  std::string eval_checkpoint;
  bool eval_sample = false;
  int eval_show = 0;
  c_eval->add_option("--config", config_path, "key = value config file");
  c_eval->add_option("--checkpoint", eval_checkpoint,
                     "checkpoint to score (default <out_dir>/model.tcl)");
  c_eval->add_flag("--sample", eval_sample,
                   "sample at the configured temperature instead of greedy");
  c_eval->add_option("--show", eval_show, "print the first N completions");
  add_run_flags(c_eval, f_eval);

  auto* c_sweep = app.add_subcommand("sweep", "one run per [sweep] grid row");
  FlagSet f_sweep;
  c_sweep->add_option("--config", config_path, "config file with a [sweep] section")
      ->required();
  add_run_flags(c_sweep, f_sweep);

  auto* c_tok = app.add_subcommand("account-tokens",
                                   "mean gradient tokens over early steps");
  std::string tok_metrics;
  int tok_first = 300;
  c_tok->add_option("--metrics", tok_metrics, "metrics.csv from a run")
      ->required();
  c_tok->add_option("--first", tok_first, "steps to average over");

  auto* c_trie = app.add_subcommand("dump-trie",
                                    "print the prefix trie of one step's group");
  FlagSet f_trie;
  std::string trie_checkpoint;
  int trie_step = 0;
  c_trie->add_option("--config", config_path, "key = value config file");
  c_trie->add_option("--checkpoint", trie_checkpoint,
                     "checkpoint to sample from (default <out_dir>/model.tcl)");
  c_trie->add_option("--step", trie_step, "step index to reproduce");
  add_run_flags(c_trie, f_trie);

  CLI11_PARSE(app, argc, argv);

  try {
    if (c_pre->parsed()) {
      tcl::pretrain(build_config(config_path, f_pre));
      std::cout << "wrote warmup artifacts\n";
      return 0;
    }
    if (c_train->parsed()) {
      const tcl::RunConfig cfg = build_config(config_path, f_train);
      const tcl::TrainResult r = tcl::train(cfg);
      std::cout << "steps " << r.steps_done;
      if (r.final_eval >= 0.0)
        std::cout << "  final accuracy " << tcl::format_double(r.final_eval);
      if (r.plateaued) std::cout << "  (plateau stop)";
      std::cout << "\ncheckpoint " << r.checkpoint_path << "\nmetrics "
                << r.metrics_path << "\n";
      return r.aborted ? 1 : 0;
    }
    if (c_eval->parsed()) {
      tcl::RunConfig cfg = build_config(config_path, f_eval);
      tcl::validate_run_config(cfg);
      if (eval_checkpoint.empty()) eval_checkpoint = cfg.out_dir + "/model.tcl";
      const tcl::Vocabulary vocab = cfg.vocab_path.empty()
                                        ? tcl::make_default_vocab()
                                        : tcl::Vocabulary::load(cfg.vocab_path);
      const tcl::Transformer<float> model =
          tcl::load_model(cfg, vocab, eval_checkpoint);
      const tcl::ProblemSource source(cfg.task, cfg.svamp_path);
      const std::vector<tcl::Problem> problems =
          source.eval_set(cfg.eval_size, cfg.seed);
      const tcl::EvalOutcome ev =
          tcl::evaluate(model, vocab, problems, cfg.temperature,
                        cfg.max_tokens, !eval_sample, cfg.seed);
      std::cout << "accuracy " << tcl::format_double(ev.accuracy) << " over "
                << problems.size() << " problems\n";
      for (int i = 0; i < eval_show && i < static_cast<int>(ev.texts.size());
           ++i)
        std::cout << "--- " << problems[i].prompt << "\n>>>" << ev.texts[i]
                  << "\n(reward " << ev.rewards[i] << ")\n";
      return 0;
    }
    if (c_sweep->parsed()) {
      std::vector<std::map<std::string, std::string>> grid;
      const tcl::RunConfig base = build_config(config_path, f_sweep, &grid);
      const auto rows = tcl::run_sweep(base, grid);
      int failed = 0;
      for (const auto& r : rows) {
        std::cout << "cell " << r.cell << " [" << r.overrides << "] "
                  << (r.ok ? "ok" : "failed");
        if (r.eval_acc >= 0.0)
          std::cout << " accuracy " << tcl::format_double(r.eval_acc);
        if (!r.error.empty()) std::cout << " (" << r.error << ")";
        std::cout << "\n";
        if (!r.ok) ++failed;
      }
      std::cout << "results " << base.out_dir << "/results.csv\n";
      return failed == 0 ? 0 : 1;
    }
    if (c_tok->parsed()) {
      const auto rows = tcl::read_metrics(tok_metrics);
      const double mean = tcl::token_accounting(rows, tok_first);
      std::cout << "mean gradient tokens over first "
                << std::min<size_t>(rows.size(), tok_first) << " steps: "
                << tcl::format_double(mean) << "\n";
      return 0;
    }
    if (c_trie->parsed()) {
      tcl::RunConfig cfg = build_config(config_path, f_trie);
      tcl::validate_run_config(cfg);
      if (trie_checkpoint.empty()) trie_checkpoint = cfg.out_dir + "/model.tcl";
      const tcl::Vocabulary vocab = cfg.vocab_path.empty()
                                        ? tcl::make_default_vocab()
                                        : tcl::Vocabulary::load(cfg.vocab_path);
      const tcl::Transformer<float> model =
          tcl::load_model(cfg, vocab, trie_checkpoint);
      const tcl::ProblemSource source(cfg.task, cfg.svamp_path);
      const uint64_t pidx =
          static_cast<uint64_t>(trie_step) * cfg.batch_size;
      auto prng = tcl::make_rng(cfg.seed, tcl::Stream::problem, pidx);
      const tcl::Problem prob = source.draw(prng);
      const std::vector<int> prompt_ids = vocab.encode(prob.prompt);
      const int g = tcl::effective_group_size(cfg);
      std::vector<uint64_t> seeds(g);
      for (int i = 0; i < g; ++i)
        seeds[i] =
            tcl::derive_seed(cfg.seed, tcl::Stream::completion, pidx, i);
      std::vector<tcl::Completion> comps = model.sample_group(
          prompt_ids, g, cfg.temperature, cfg.max_tokens, seeds);
      for (tcl::Completion& c : comps)
        c.reward = tcl::reward(vocab.decode(c.gen), prob);
      const tcl::PrefixTrie trie = tcl::build_prefix_trie(comps);
      std::cout << "prompt: " << prob.prompt << "\n"
                << "answer: " << prob.answer << "\n"
                << tcl::dump_trie(trie);
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
