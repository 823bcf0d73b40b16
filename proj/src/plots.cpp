#include "tcl/plots.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>

#include "tcl/common.hpp"

namespace tcl {

namespace {

constexpr double kW = 720, kH = 420;
constexpr double kL = 60, kR = 20, kT = 30, kB = 40;  // margins

struct Series {
  std::vector<double> x, y;
  std::string color;
  std::string label;
  bool points = false;  // draw markers instead of a line
};

double map_x(double v, double lo, double hi) {
  if (hi <= lo) return kL;
  return kL + (v - lo) / (hi - lo) * (kW - kL - kR);
}

double map_y(double v, double lo, double hi) {
  if (hi <= lo) return kH - kB;
  return kH - kB - (v - lo) / (hi - lo) * (kH - kT - kB);
}

std::string fmt(double v) {
  std::string s = format_double(v);
  if (s.size() > 8) s = s.substr(0, 8);
  return s;
}

void write_chart(const std::string& path, const std::string& title,
                 const std::vector<Series>& series, double y_lo, double y_hi) {
  double x_lo = 0, x_hi = 1;
  bool any = false;
  for (const Series& s : series)
    for (double v : s.x) {
      if (!any) x_lo = x_hi = v;
      x_lo = std::min(x_lo, v);
      x_hi = std::max(x_hi, v);
      any = true;
    }
  if (!any) return;
  if (x_hi == x_lo) x_hi = x_lo + 1;

  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("plots: cannot write " + path);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW
      << "\" height=\"" << kH << "\" font-family=\"sans-serif\" font-size=\"12\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      << "<text x=\"" << kW / 2 << "\" y=\"18\" text-anchor=\"middle\" "
         "font-size=\"14\">" << title << "</text>\n";
  // axes
  out << "<line x1=\"" << kL << "\" y1=\"" << kT << "\" x2=\"" << kL
      << "\" y2=\"" << kH - kB << "\" stroke=\"black\"/>\n"
      << "<line x1=\"" << kL << "\" y1=\"" << kH - kB << "\" x2=\"" << kW - kR
      << "\" y2=\"" << kH - kB << "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double fy = y_lo + (y_hi - y_lo) * i / 4.0;
    const double py = map_y(fy, y_lo, y_hi);
    out << "<line x1=\"" << kL << "\" y1=\"" << py << "\" x2=\"" << kW - kR
        << "\" y2=\"" << py << "\" stroke=\"#ddd\"/>\n"
        << "<text x=\"" << kL - 6 << "\" y=\"" << py + 4
        << "\" text-anchor=\"end\">" << fmt(fy) << "</text>\n";
    const double fx = x_lo + (x_hi - x_lo) * i / 4.0;
    const double px = map_x(fx, x_lo, x_hi);
    out << "<text x=\"" << px << "\" y=\"" << kH - kB + 16
        << "\" text-anchor=\"middle\">" << fmt(fx) << "</text>\n";
  }
  out << "<text x=\"" << (kL + kW - kR) / 2 << "\" y=\"" << kH - 8
      << "\" text-anchor=\"middle\">step</text>\n";
  double ly = kT + 10;
  for (const Series& s : series) {
    if (s.x.empty()) continue;
    if (s.points) {
      for (size_t i = 0; i < s.x.size(); ++i)
        out << "<circle cx=\"" << map_x(s.x[i], x_lo, x_hi) << "\" cy=\""
            << map_y(s.y[i], y_lo, y_hi) << "\" r=\"3\" fill=\"" << s.color
            << "\"/>\n";
    } else {
      out << "<polyline fill=\"none\" stroke=\"" << s.color
          << "\" stroke-width=\"1.5\" points=\"";
      for (size_t i = 0; i < s.x.size(); ++i)
        out << map_x(s.x[i], x_lo, x_hi) << ','
            << map_y(s.y[i], y_lo, y_hi) << ' ';
      out << "\"/>\n";
    }
    out << "<text x=\"" << kW - kR - 8 << "\" y=\"" << ly
        << "\" text-anchor=\"end\" fill=\"" << s.color << "\">" << s.label
        << "</text>\n";
    ly += 16;
  }
  out << "</svg>\n";
}

}  // namespace

void write_run_plots(const std::vector<MetricsRow>& rows,
                     const std::string& dir) {
  if (rows.empty()) return;
  std::filesystem::create_directories(dir);

  Series reward{{}, {}, "#888", "group reward", false};
  Series train{{}, {}, "#1f77b4", "train acc (rolling)", false};
  Series eval{{}, {}, "#d62728", "held-out acc", true};
  Series tokens{{}, {}, "#2ca02c", "gradient tokens", false};
  double tok_hi = 1.0;
  for (const MetricsRow& r : rows) {
    reward.x.push_back(r.step);
    reward.y.push_back(r.mean_reward);
    train.x.push_back(r.step);
    train.y.push_back(r.train_acc);
    if (r.eval_acc >= 0.0) {
      eval.x.push_back(r.step);
      eval.y.push_back(r.eval_acc);
    }
    tokens.x.push_back(r.step);
    tokens.y.push_back(static_cast<double>(r.loss_tokens));
    tok_hi = std::max(tok_hi, static_cast<double>(r.loss_tokens));
  }
  write_chart(dir + "/accuracy.svg", "accuracy", {reward, train, eval}, 0.0,
              1.0);
  write_chart(dir + "/tokens.svg", "gradient tokens per step", {tokens}, 0.0,
              tok_hi);
}

}  // namespace tcl
