#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace tcl {

// Everything that determines a run. A run is a pure function of this struct:
// same config, same outputs, byte for byte.
struct RunConfig {
  std::string algo = "tspmo";    // grpo | sgrpo | tspmo
  std::string task = "mult-2x1"; // mult-AxB | wordprob | svamp-file
  std::string svamp_path;        // required when task == svamp-file

  uint64_t seed = 1;
  int steps = 300;       // optimizer steps
  int batch_size = 1;    // problems folded into one optimizer step
  int group_size = 0;    // 0 -> algorithm default (8, tspmo 50)

  double lr = 1e-4;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;

  double beta = 0.01;    // reference-policy divergence weight (grpo, sgrpo)
  double lambda = 0.01;  // trainable-weight decay term (tspmo)
  double temperature = 0.3;
  int max_tokens = 300;

  // stochastic token selection (sgrpo)
  int alpha = 50;
  int k = 100;
  double p = 0.3;

  // replay (tspmo)
  int c_success = 1;
  int c_fail = 0;
  int replay_capacity = 512;
  double success_threshold = 1.0;

  // adapters
  double lora_fraction = 0.25;
  int lora_rank = 8;
  double lora_scaling = 1.0;

  // model shape (ignored when base_checkpoint fixes the shape; they must match)
  int layers = 4;
  int width = 128;
  int heads = 4;
  int ffw = 512;
  int max_context = 384;

  int eval_size = 200;
  int eval_every = 25;
  int checkpoint_every = 100;

  int plateau_window = 4;
  double plateau_tolerance = 0.02;
  bool plateau_stop = false;

  // supervised warmup (pretrain subcommand)
  int pretrain_steps = 3000;
  double pretrain_lr = 1e-3;
  int verbose_per_fact = 3;  // worked-solution copies per multiplication fact
  int terse_per_fact = 1;    // short-answer copies per fact

  std::string out_dir = "run_out";
  std::string base_checkpoint;  // empty -> fresh random parameters
  std::string vocab_path;       // empty -> built-in vocabulary
};

// Parsed config file: base settings plus optional grid rows from a [sweep]
// section, each row a set of key=value overrides for one cell.
struct ConfigFile {
  RunConfig base;
  std::vector<std::map<std::string, std::string>> sweep;
};

// key = value lines, '#' comments, blank lines ignored. After a "[sweep]"
// line every nonempty line is one grid row of space-separated overrides.
// Unknown keys and malformed values raise IoError.
ConfigFile load_run_config(const std::string& path);

// Applies one key=value pair; key uses the config-file spelling (underscores).
// Unknown key or unparsable value raises IoError.
void apply_override(RunConfig& cfg, const std::string& key,
                    const std::string& value);

// Range and cross-field checks; raises ContractViolation with the offending
// field named. Call after all overrides are applied.
void validate_run_config(const RunConfig& cfg);

// Writes cfg as a key = value file that load_run_config reads back exactly.
void save_run_config(const RunConfig& cfg, const std::string& path);

// group_size with the per-algorithm default filled in.
int effective_group_size(const RunConfig& cfg);

}  // namespace tcl
