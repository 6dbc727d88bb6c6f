#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "perigen/pbt.hpp"
#include "perigen/signals.hpp"

namespace perigen {

using NamedPredictor = std::pair<std::string, std::function<double(double)>>;

namespace detail {

inline constexpr const char* kPalette[] = {"#d62728", "#1f77b4", "#2ca02c", "#ff7f0e", "#9467bd",
                                           "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

inline std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

inline std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '&') out += "&amp;";
    else if (c == '<') out += "&lt;";
    else if (c == '>') out += "&gt;";
    else if (c == '"') out += "&quot;";
    else out += c;
  }
  return out;
}

struct Frame {
  double x0, x1, y0, y1;
  double width = 960, height = 360, margin = 40;

  double sx(double x) const { return margin + (x - x0) / (x1 - x0) * (width - 2 * margin); }
  double sy(double y) const { return height - margin - (y - y0) / (y1 - y0) * (height - 2 * margin); }
};

inline std::string polyline(const Frame& f, const std::vector<double>& xs, const std::vector<double>& ys,
                            const char* colour, double stroke) {
  std::string out;
  std::string pts;
  auto flush = [&] {
    if (!pts.empty())
      out += "<polyline fill=\"none\" stroke=\"" + std::string(colour) + "\" stroke-width=\"" + num(stroke) +
             "\" points=\"" + pts + "\"/>\n";
    pts.clear();
  };
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (!std::isfinite(ys[i])) {
      flush();
      continue;
    }
    const double y = std::clamp(ys[i], f.y0, f.y1);
    if (!pts.empty()) pts += ' ';
    pts += num(f.sx(xs[i])) + ',' + num(f.sy(y));
  }
  flush();
  return out;
}

}  // namespace detail

/// Truth and prediction curves over the training and evaluation domains,
/// sampled on the same grids the metrics use, with the training domain
/// shaded. Output bytes depend only on the inputs.
inline std::string plot_predictions(const SignalVariant& truth, const Domain& d, int rate,
                                    const std::vector<NamedPredictor>& predictors) {
  std::vector<double> xs = evaluation_grid(d, rate);
  const std::vector<double> inner = training_grid(d, rate);
  xs.insert(xs.end(), inner.begin(), inner.end());
  std::ranges::sort(xs);

  std::vector<double> ys(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) ys[i] = truth.value(xs[i]);
  double lo = -1.0, hi = 1.0;
  for (double y : ys) lo = std::min(lo, y), hi = std::max(hi, y);
  const double pad = 0.5 * (hi - lo);
  detail::Frame f{-d.eval_edge(), d.eval_edge(), lo - pad, hi + pad};

  std::string out = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + detail::num(f.width) + "\" height=\"" +
                    detail::num(f.height) + "\" viewBox=\"0 0 " + detail::num(f.width) + " " +
                    detail::num(f.height) + "\">\n";
  out += "<rect x=\"0\" y=\"0\" width=\"" + detail::num(f.width) + "\" height=\"" + detail::num(f.height) +
         "\" fill=\"white\"/>\n";
  out += "<rect x=\"" + detail::num(f.sx(-d.train_edge())) + "\" y=\"" + detail::num(f.margin) + "\" width=\"" +
         detail::num(f.sx(d.train_edge()) - f.sx(-d.train_edge())) + "\" height=\"" +
         detail::num(f.height - 2 * f.margin) + "\" fill=\"#e8e8e8\"/>\n";
  out += "<line x1=\"" + detail::num(f.margin) + "\" y1=\"" + detail::num(f.sy(0)) + "\" x2=\"" +
         detail::num(f.width - f.margin) + "\" y2=\"" + detail::num(f.sy(0)) + "\" stroke=\"#999\"/>\n";
  out += detail::polyline(f, xs, ys, "black", 2.0);
  double ly = f.margin + 4;
  out += "<text x=\"" + detail::num(f.width - f.margin - 150) + "\" y=\"" + detail::num(ly + 10) +
         "\" font-size=\"12\" fill=\"black\">truth</text>\n";
  for (std::size_t k = 0; k < predictors.size(); ++k) {
    const char* colour = detail::kPalette[k % std::size(detail::kPalette)];
    std::vector<double> ps(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) {
      try {
        ps[i] = predictors[k].second(xs[i]);
      } catch (const std::exception&) {
        ps[i] = std::numeric_limits<double>::quiet_NaN();
      }
    }
    out += detail::polyline(f, xs, ps, colour, 1.2);
    ly += 14;
    out += "<text x=\"" + detail::num(f.width - f.margin - 150) + "\" y=\"" + detail::num(ly + 10) +
           "\" font-size=\"12\" fill=\"" + colour + "\">" + detail::escape(predictors[k].first) + "</text>\n";
  }
  out += "</svg>\n";
  return out;
}

/// Scatter of unit period against birth generation, coloured by root
/// ancestor; the fittest unit is ringed.
inline std::string plot_population(const std::vector<LogRecord>& log) {
  double p0 = std::numeric_limits<double>::infinity(), p1 = -p0;
  int g1 = 0;
  const LogRecord* best = nullptr;
  for (const auto& r : log) {
    p0 = std::min(p0, r.period);
    p1 = std::max(p1, r.period);
    g1 = std::max(g1, r.generation);
    if (std::isfinite(r.loss) && (!best || r.loss < best->loss)) best = &r;
  }
  if (!std::isfinite(p0)) p0 = 0.0, p1 = 1.0;
  if (p1 <= p0) p1 = p0 + 1.0;
  detail::Frame f{-0.5, g1 + 0.5, p0 - 0.05 * (p1 - p0), p1 + 0.05 * (p1 - p0)};
  f.width = 640;
  f.height = 400;
  std::string out = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640.00\" height=\"400.00\" viewBox=\"0 0 640.00 400.00\">\n";
  out += "<rect x=\"0\" y=\"0\" width=\"640.00\" height=\"400.00\" fill=\"white\"/>\n";
  for (int g = 0; g <= g1; ++g)
    out += "<text x=\"" + detail::num(f.sx(g) - 3) + "\" y=\"" + detail::num(f.height - 20) +
           "\" font-size=\"10\">" + std::to_string(g) + "</text>\n";
  for (const auto& r : log) {
    const char* colour = detail::kPalette[static_cast<std::size_t>(std::abs(r.ancestor)) % std::size(detail::kPalette)];
    out += "<circle cx=\"" + detail::num(f.sx(r.generation)) + "\" cy=\"" + detail::num(f.sy(r.period)) +
           "\" r=\"3.00\" fill=\"" + colour + "\"/>\n";
  }
  if (best)
    out += "<circle cx=\"" + detail::num(f.sx(best->generation)) + "\" cy=\"" + detail::num(f.sy(best->period)) +
           "\" r=\"7.00\" fill=\"none\" stroke=\"black\"/>\n";
  out += "</svg>\n";
  return out;
}

}  // namespace perigen
