#pragma once

#include <fstream>
#include <string>
#include <vector>

namespace tcl {

// One optimizer step of telemetry. wall_ms is real time and therefore not
// reproducible; it is written to a timing sidecar so metrics.csv stays a pure
// function of the config.
struct MetricsRow {
  int step = 0;
  double mean_reward = 0.0;  // mean group reward over the step's batch
  double train_acc = 0.0;    // rolling mean of mean_reward, window 25
  double eval_acc = -1.0;    // held-out greedy accuracy; -1 = not measured
  double loss = 0.0;         // objective value, mean over the batch
  long long loss_tokens = 0; // tokens that carried gradient this step
  int degenerate_groups = 0; // zero-spread groups skipped by normalization
  double wall_ms = 0.0;
};

// Append-only writers for <dir>/metrics.csv and <dir>/timing.csv. The first
// line of each file is a versioned header comment so later readers can detect
// format drift.
class MetricsWriter {
 public:
  explicit MetricsWriter(const std::string& dir);
  void append(const MetricsRow& row);
  const std::string& metrics_path() const { return metrics_path_; }

 private:
  std::ofstream metrics_;
  std::ofstream timing_;
  std::string metrics_path_;
};

// Parses a metrics.csv written by MetricsWriter. wall_ms is left at zero.
std::vector<MetricsRow> read_metrics(const std::string& path);

// Shortest decimal string that parses back to exactly v.
std::string format_double(double v);

// Mean gradient-token count over the first first_steps rows. When the log is
// shorter the mean covers the whole log and a notice is printed.
double token_accounting(const std::vector<MetricsRow>& rows, int first_steps);

// True when the best value in the trailing window improves on the best value
// before it by at most tol. Histories no longer than the window report false.
bool plateau_detect(const std::vector<double>& history, int window, double tol);

}  // namespace tcl
