#include "tcl/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>

#include "tcl/common.hpp"

namespace tcl {

static const char* kMetricsHeader = "# tcl metrics v1";
static const char* kTimingHeader = "# tcl timing v1";
static const char* kMetricsColumns =
    "step,mean_reward,train_acc,eval_acc,loss,loss_tokens,degenerate_groups";

std::string format_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  check(ec == std::errc(), "metrics: number formatting failed");
  return std::string(buf, end);
}

MetricsWriter::MetricsWriter(const std::string& dir) {
  std::filesystem::create_directories(dir);
  metrics_path_ = dir + "/metrics.csv";
  metrics_.open(metrics_path_, std::ios::trunc);
  if (!metrics_) throw IoError("metrics: cannot open " + metrics_path_);
  metrics_ << kMetricsHeader << "\n" << kMetricsColumns << "\n";
  const std::string tpath = dir + "/timing.csv";
  timing_.open(tpath, std::ios::trunc);
  if (!timing_) throw IoError("metrics: cannot open " + tpath);
  timing_ << kTimingHeader << "\nstep,wall_ms\n";
}

void MetricsWriter::append(const MetricsRow& r) {
  metrics_ << r.step << ',' << format_double(r.mean_reward) << ','
           << format_double(r.train_acc) << ',';
  if (r.eval_acc >= 0.0) metrics_ << format_double(r.eval_acc);
  metrics_ << ',' << format_double(r.loss) << ',' << r.loss_tokens << ','
           << r.degenerate_groups << '\n';
  metrics_.flush();
  timing_ << r.step << ',' << format_double(r.wall_ms) << '\n';
  timing_.flush();
}

std::vector<MetricsRow> read_metrics(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("metrics: cannot open " + path);
  std::string line;
  if (!std::getline(in, line) || line != kMetricsHeader)
    throw IoError("metrics: " + path + " has an unknown header");
  if (!std::getline(in, line) || line != kMetricsColumns)
    throw IoError("metrics: " + path + " has unknown columns");
  std::vector<MetricsRow> out;
  int lineno = 2;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::string field;
    std::istringstream row(line);
    while (std::getline(row, field, ',')) f.push_back(field);
    if (line.back() == ',') f.push_back("");
    if (f.size() != 7)
      throw IoError("metrics: line " + std::to_string(lineno) +
                    " has " + std::to_string(f.size()) + " fields");
    MetricsRow r;
    try {
      r.step = std::stoi(f[0]);
      r.mean_reward = std::stod(f[1]);
      r.train_acc = std::stod(f[2]);
      r.eval_acc = f[3].empty() ? -1.0 : std::stod(f[3]);
      r.loss = std::stod(f[4]);
      r.loss_tokens = std::stoll(f[5]);
      r.degenerate_groups = std::stoi(f[6]);
    } catch (const std::exception&) {
      throw IoError("metrics: line " + std::to_string(lineno) +
                    " has a malformed field");
    }
    out.push_back(r);
  }
  return out;
}

double token_accounting(const std::vector<MetricsRow>& rows, int first_steps) {
  check(first_steps >= 1, "accounting: first_steps must be >= 1");
  check(!rows.empty(), "accounting: empty metrics log");
  size_t n = std::min<size_t>(rows.size(), static_cast<size_t>(first_steps));
  if (static_cast<size_t>(first_steps) > rows.size())
    std::cerr << "accounting: only " << rows.size()
              << " steps logged, averaging over all of them\n";
  double sum = 0.0;
  for (size_t i = 0; i < n; ++i) sum += static_cast<double>(rows[i].loss_tokens);
  return sum / static_cast<double>(n);
}

bool plateau_detect(const std::vector<double>& history, int window,
                    double tol) {
  check(window >= 2, "plateau: window must be >= 2");
  check(tol >= 0.0, "plateau: tolerance must be >= 0");
  const size_t n = history.size();
  if (n <= static_cast<size_t>(window)) return false;
  const size_t split = n - static_cast<size_t>(window);
  const double before = *std::max_element(history.begin(),
                                          history.begin() + split);
  const double recent = *std::max_element(history.begin() + split,
                                          history.end());
  return recent - before <= tol;
}

}  // namespace tcl
