#include "tcl/run_config.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "tcl/common.hpp"
#include "tcl/metrics.hpp"
#include "tcl/tasks.hpp"

namespace tcl {

namespace {

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

long long parse_int(const std::string& key, const std::string& v) {
  size_t used = 0;
  long long out = 0;
  try {
    out = std::stoll(v, &used);
  } catch (const std::exception&) {
    throw IoError("config: key '" + key + "' needs an integer, got '" + v + "'");
  }
  if (used != v.size())
    throw IoError("config: key '" + key + "' needs an integer, got '" + v + "'");
  return out;
}

double parse_real(const std::string& key, const std::string& v) {
  size_t used = 0;
  double out = 0.0;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception&) {
    throw IoError("config: key '" + key + "' needs a number, got '" + v + "'");
  }
  if (used != v.size())
    throw IoError("config: key '" + key + "' needs a number, got '" + v + "'");
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw IoError("config: key '" + key + "' needs true/false, got '" + v + "'");
}

}  // namespace

void apply_override(RunConfig& cfg, const std::string& key,
                    const std::string& value) {
  const std::string v = trim(value);
  if (key == "algo") cfg.algo = v;
  else if (key == "task") cfg.task = v;
  else if (key == "svamp_path") cfg.svamp_path = v;
  else if (key == "seed") cfg.seed = static_cast<uint64_t>(parse_int(key, v));
  else if (key == "steps") cfg.steps = static_cast<int>(parse_int(key, v));
  else if (key == "batch_size") cfg.batch_size = static_cast<int>(parse_int(key, v));
  else if (key == "group_size") cfg.group_size = static_cast<int>(parse_int(key, v));
  else if (key == "lr") cfg.lr = parse_real(key, v);
  else if (key == "adam_beta1") cfg.adam_beta1 = parse_real(key, v);
  else if (key == "adam_beta2") cfg.adam_beta2 = parse_real(key, v);
  else if (key == "adam_eps") cfg.adam_eps = parse_real(key, v);
  else if (key == "beta") cfg.beta = parse_real(key, v);
  else if (key == "lambda") cfg.lambda = parse_real(key, v);
  else if (key == "temperature") cfg.temperature = parse_real(key, v);
  else if (key == "max_tokens") cfg.max_tokens = static_cast<int>(parse_int(key, v));
  else if (key == "alpha") cfg.alpha = static_cast<int>(parse_int(key, v));
  else if (key == "k") cfg.k = static_cast<int>(parse_int(key, v));
  else if (key == "p") cfg.p = parse_real(key, v);
  else if (key == "c_success") cfg.c_success = static_cast<int>(parse_int(key, v));
  else if (key == "c_fail") cfg.c_fail = static_cast<int>(parse_int(key, v));
  else if (key == "replay_capacity") cfg.replay_capacity = static_cast<int>(parse_int(key, v));
  else if (key == "success_threshold") cfg.success_threshold = parse_real(key, v);
  else if (key == "lora_fraction") cfg.lora_fraction = parse_real(key, v);
  else if (key == "lora_rank") cfg.lora_rank = static_cast<int>(parse_int(key, v));
  else if (key == "lora_scaling") cfg.lora_scaling = parse_real(key, v);
  else if (key == "layers") cfg.layers = static_cast<int>(parse_int(key, v));
  else if (key == "width") cfg.width = static_cast<int>(parse_int(key, v));
  else if (key == "heads") cfg.heads = static_cast<int>(parse_int(key, v));
  else if (key == "ffw") cfg.ffw = static_cast<int>(parse_int(key, v));
  else if (key == "max_context") cfg.max_context = static_cast<int>(parse_int(key, v));
  else if (key == "eval_size") cfg.eval_size = static_cast<int>(parse_int(key, v));
  else if (key == "eval_every") cfg.eval_every = static_cast<int>(parse_int(key, v));
  else if (key == "checkpoint_every") cfg.checkpoint_every = static_cast<int>(parse_int(key, v));
  else if (key == "plateau_window") cfg.plateau_window = static_cast<int>(parse_int(key, v));
  else if (key == "plateau_tolerance") cfg.plateau_tolerance = parse_real(key, v);
  else if (key == "plateau_stop") cfg.plateau_stop = parse_bool(key, v);
  else if (key == "pretrain_steps") cfg.pretrain_steps = static_cast<int>(parse_int(key, v));
  else if (key == "pretrain_lr") cfg.pretrain_lr = parse_real(key, v);
  else if (key == "verbose_per_fact") cfg.verbose_per_fact = static_cast<int>(parse_int(key, v));
  else if (key == "terse_per_fact") cfg.terse_per_fact = static_cast<int>(parse_int(key, v));
  else if (key == "out_dir") cfg.out_dir = v;
  else if (key == "base_checkpoint") cfg.base_checkpoint = v;
  else if (key == "vocab_path") cfg.vocab_path = v;
  else throw IoError("config: unknown key '" + key + "'");
}

ConfigFile load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("config: cannot open '" + path + "'");
  ConfigFile out;
  bool in_sweep = false;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line == "[sweep]") {
      in_sweep = true;
      continue;
    }
    if (!in_sweep) {
      const size_t eq = line.find('=');
      if (eq == std::string::npos)
        throw IoError("config: line " + std::to_string(lineno) +
                      " is not key = value");
      apply_override(out.base, trim(line.substr(0, eq)),
                     trim(line.substr(eq + 1)));
      continue;
    }
    // one grid row: space-separated key=value pairs
    std::map<std::string, std::string> row;
    std::istringstream cell(line);
    std::string pair;
    while (cell >> pair) {
      const size_t eq = pair.find('=');
      if (eq == std::string::npos || eq == 0)
        throw IoError("config: sweep line " + std::to_string(lineno) +
                      " has a malformed pair '" + pair + "'");
      row[pair.substr(0, eq)] = pair.substr(eq + 1);
    }
    if (!row.empty()) out.sweep.push_back(std::move(row));
  }
  return out;
}

void save_run_config(const RunConfig& cfg, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("config: cannot write '" + path + "'");
  auto real = [](double v) { return format_double(v); };
  out << "algo = " << cfg.algo << "\n"
      << "task = " << cfg.task << "\n";
  if (!cfg.svamp_path.empty()) out << "svamp_path = " << cfg.svamp_path << "\n";
  out << "seed = " << cfg.seed << "\n"
      << "steps = " << cfg.steps << "\n"
      << "batch_size = " << cfg.batch_size << "\n"
      << "group_size = " << cfg.group_size << "\n"
      << "lr = " << real(cfg.lr) << "\n"
      << "adam_beta1 = " << real(cfg.adam_beta1) << "\n"
      << "adam_beta2 = " << real(cfg.adam_beta2) << "\n"
      << "adam_eps = " << real(cfg.adam_eps) << "\n"
      << "beta = " << real(cfg.beta) << "\n"
      << "lambda = " << real(cfg.lambda) << "\n"
      << "temperature = " << real(cfg.temperature) << "\n"
      << "max_tokens = " << cfg.max_tokens << "\n"
      << "alpha = " << cfg.alpha << "\n"
      << "k = " << cfg.k << "\n"
      << "p = " << real(cfg.p) << "\n"
      << "c_success = " << cfg.c_success << "\n"
      << "c_fail = " << cfg.c_fail << "\n"
      << "replay_capacity = " << cfg.replay_capacity << "\n"
      << "success_threshold = " << real(cfg.success_threshold) << "\n"
      << "lora_fraction = " << real(cfg.lora_fraction) << "\n"
      << "lora_rank = " << cfg.lora_rank << "\n"
      << "lora_scaling = " << real(cfg.lora_scaling) << "\n"
      << "layers = " << cfg.layers << "\n"
      << "width = " << cfg.width << "\n"
      << "heads = " << cfg.heads << "\n"
      << "ffw = " << cfg.ffw << "\n"
      << "max_context = " << cfg.max_context << "\n"
      << "eval_size = " << cfg.eval_size << "\n"
      << "eval_every = " << cfg.eval_every << "\n"
      << "checkpoint_every = " << cfg.checkpoint_every << "\n"
      << "plateau_window = " << cfg.plateau_window << "\n"
      << "plateau_tolerance = " << real(cfg.plateau_tolerance) << "\n"
      << "plateau_stop = " << (cfg.plateau_stop ? "true" : "false") << "\n"
      << "pretrain_steps = " << cfg.pretrain_steps << "\n"
      << "pretrain_lr = " << real(cfg.pretrain_lr) << "\n"
      << "verbose_per_fact = " << cfg.verbose_per_fact << "\n"
      << "terse_per_fact = " << cfg.terse_per_fact << "\n"
      << "out_dir = " << cfg.out_dir << "\n";
  if (!cfg.base_checkpoint.empty())
    out << "base_checkpoint = " << cfg.base_checkpoint << "\n";
  if (!cfg.vocab_path.empty())
    out << "vocab_path = " << cfg.vocab_path << "\n";
  if (!out) throw IoError("config: write failed for '" + path + "'");
}

int effective_group_size(const RunConfig& cfg) {
  if (cfg.group_size > 0) return cfg.group_size;
  return cfg.algo == "tspmo" ? 50 : 8;
}

void validate_run_config(const RunConfig& cfg) {
  const std::set<std::string> algos = {"grpo", "sgrpo", "tspmo"};
  check(algos.count(cfg.algo) == 1, "config: algo must be grpo, sgrpo or tspmo");
  if (cfg.task == "svamp-file") {
    check(!cfg.svamp_path.empty(), "config: svamp-file task needs svamp_path");
  } else if (cfg.task != "wordprob") {
    parse_mult_task_name(cfg.task);  // throws on anything else
  }
  check(cfg.steps >= 0, "config: steps must be >= 0");
  check(cfg.batch_size >= 1, "config: batch_size must be >= 1");
  check(cfg.group_size >= 0, "config: group_size must be >= 0");
  check(effective_group_size(cfg) >= 2, "config: group size must be >= 2");
  check(cfg.lr > 0.0, "config: lr must be positive");
  check(cfg.adam_beta1 >= 0.0 && cfg.adam_beta1 < 1.0 &&
        cfg.adam_beta2 >= 0.0 && cfg.adam_beta2 < 1.0,
        "config: adam betas must be in [0, 1)");
  check(cfg.adam_eps > 0.0, "config: adam_eps must be positive");
  check(cfg.beta >= 0.0, "config: beta must be >= 0");
  check(cfg.lambda >= 0.0, "config: lambda must be >= 0");
  check(cfg.temperature > 0.0, "config: temperature must be positive");
  check(cfg.max_tokens >= 1 && cfg.max_tokens <= 300,
        "config: max_tokens must be in [1, 300]");
  if (cfg.algo == "sgrpo") {
    check(cfg.alpha >= 0, "config: alpha must be >= 0");
    check(cfg.k >= 1, "config: k must be >= 1");
    check(cfg.p >= 0.0 && cfg.p <= 1.0, "config: p must be in [0, 1]");
  }
  if (cfg.algo == "tspmo") {
    check(cfg.c_success >= 0 && cfg.c_fail >= 0,
          "config: replay budgets must be >= 0");
    check(cfg.replay_capacity >= 1, "config: replay_capacity must be >= 1");
  }
  check(cfg.lora_fraction > 0.0 && cfg.lora_fraction <= 1.0,
        "config: lora_fraction must be in (0, 1]");
  check(cfg.lora_rank >= 1, "config: lora_rank must be >= 1");
  check(cfg.lora_scaling > 0.0, "config: lora_scaling must be positive");
  check(cfg.layers >= 1 && cfg.width >= 1 && cfg.ffw >= 1 && cfg.heads >= 1,
        "config: model dims must be >= 1");
  check(cfg.width % cfg.heads == 0, "config: heads must divide width");
  check(cfg.max_context >= 8, "config: max_context must be >= 8");
  check(cfg.eval_size >= 1, "config: eval_size must be >= 1");
  check(cfg.eval_every >= 1, "config: eval_every must be >= 1");
  check(cfg.checkpoint_every >= 1, "config: checkpoint_every must be >= 1");
  check(cfg.plateau_window >= 2, "config: plateau_window must be >= 2");
  check(cfg.plateau_tolerance >= 0.0, "config: plateau_tolerance must be >= 0");
  check(cfg.pretrain_steps >= 0, "config: pretrain_steps must be >= 0");
  check(cfg.pretrain_lr > 0.0, "config: pretrain_lr must be positive");
  check(cfg.verbose_per_fact >= 0 && cfg.terse_per_fact >= 0,
        "config: corpus copy counts must be >= 0");
  check(cfg.verbose_per_fact + cfg.terse_per_fact >= 1,
        "config: corpus needs at least one copy per fact");
  check(!cfg.out_dir.empty(), "config: out_dir must not be empty");
}

}  // namespace tcl
