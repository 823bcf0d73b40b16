#pragma once

#include <map>
#include <random>
#include <string>
#include <vector>

#include "tcl/metrics.hpp"
#include "tcl/model.hpp"
#include "tcl/run_config.hpp"
#include "tcl/tasks.hpp"
#include "tcl/vocab.hpp"

namespace tcl {

// Deterministic problem stream for a task name: generated instances for the
// synthetic tasks, uniform draws from the file for svamp-file.
class ProblemSource {
 public:
  ProblemSource(const std::string& task, const std::string& svamp_path);
  Problem draw(std::mt19937_64& rng) const;
  // Fixed held-out set; a pure function of (n, master). File-backed tasks
  // subsample without replacement when the file is larger than n.
  std::vector<Problem> eval_set(int n, uint64_t master) const;

 private:
  std::string task_;
  int digits_a_ = 0, digits_b_ = 0;
  std::vector<Problem> fixed_;
};

struct EvalOutcome {
  double accuracy = 0.0;          // mean reward over the problems
  std::vector<double> rewards;
  std::vector<std::string> texts; // decoded completions, same order
};

// Scores one completion per problem. Greedy decoding ignores the seed;
// stochastic decoding derives one rng per problem from it.
EvalOutcome evaluate(const Transformer<float>& model, const Vocabulary& vocab,
                     const std::vector<Problem>& problems, double temperature,
                     int max_tokens, bool greedy, uint64_t seed);

struct TrainResult {
  int steps_done = 0;
  bool aborted = false;    // stopped by a non-finite loss
  bool plateaued = false;  // stopped by the plateau rule
  double final_eval = -1.0;
  std::string checkpoint_path;
  std::string metrics_path;
  std::vector<MetricsRow> rows;
};

// One full run: build or load the base parameters, freeze a reference copy,
// attach adapters, roll the policy-optimization loop, stream metrics, save
// checkpoints under cfg.out_dir. Pure function of cfg.
TrainResult train(const RunConfig& cfg);

// Supervised warmup on the task's corpus with a fresh model. Writes
// vocab.txt, base.tcl, pretrain_loss.csv and config.txt under cfg.out_dir;
// the written config points at those artifacts so a train run can consume
// the directory directly.
void pretrain(const RunConfig& cfg);

// Rebuilds the model a checkpoint describes: tries the adapter-bearing shape
// first and falls back to base-only parameters for warmup checkpoints.
Transformer<float> load_model(const RunConfig& cfg, const Vocabulary& vocab,
                              const std::string& checkpoint_path);

struct SweepCellResult {
  int cell = 0;
  std::string overrides;
  bool ok = false;
  double eval_acc = -1.0;
  std::string error;
};

// Train+eval per grid row. Each cell gets a seed derived from the master seed
// and the cell index, and its own subdirectory. A failing cell is recorded in
// its row; the sweep continues. Writes results.csv under base.out_dir.
std::vector<SweepCellResult> run_sweep(
    const RunConfig& base,
    const std::vector<std::map<std::string, std::string>>& grid);

}  // namespace tcl
