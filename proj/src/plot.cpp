#include "crane/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>
#include <vector>

#include "crane/io.hpp"

namespace crane {

namespace {

constexpr double kWidth = 720.0;
constexpr double kPanelHeight = 300.0;
constexpr double kLeft = 80.0;
constexpr double kRight = 20.0;
constexpr double kTop = 30.0;
constexpr double kBottom = 45.0;
constexpr int kTicks = 5;

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

struct Range {
  double lo;
  double hi;
};

// Data extrema widened by 5% each side; a flat series gets a unit-wide range.
Range axis_range(const std::vector<double>& v) {
  const auto [lo_it, hi_it] = std::minmax_element(v.begin(), v.end());
  double lo = *lo_it;
  double hi = *hi_it;
  if (hi - lo <= 0.0) {
    lo -= 0.5;
    hi += 0.5;
  } else {
    const double pad = 0.05 * (hi - lo);
    lo -= pad;
    hi += pad;
  }
  // Rounded outwards so the printed four-decimal range still covers the data.
  return {std::floor(lo * 1e4) / 1e4, std::ceil(hi * 1e4) / 1e4};
}

void panel(std::string& svg, double y0, const std::string& series, const std::string& label,
           const std::vector<double>& xs, const std::vector<double>& ys, const char* colour) {
  const Range xr = xs.front() == xs.back() ? Range{xs.front() - 0.5, xs.back() + 0.5}
                                           : Range{xs.front(), xs.back()};
  const Range yr = axis_range(ys);
  const double plot_w = kWidth - kLeft - kRight;
  const double plot_h = kPanelHeight - kTop - kBottom;
  auto px = [&](double x) { return kLeft + (x - xr.lo) / (xr.hi - xr.lo) * plot_w; };
  auto py = [&](double y) { return y0 + kTop + (yr.hi - y) / (yr.hi - yr.lo) * plot_h; };

  svg += "<g class=\"panel\" data-series=\"" + series + "\" data-x-min=\"" + fmt(xr.lo) +
         "\" data-x-max=\"" + fmt(xr.hi) + "\" data-y-min=\"" + fmt(yr.lo) + "\" data-y-max=\"" +
         fmt(yr.hi) + "\">\n";
  svg += "<text x=\"" + fmt(kLeft) + "\" y=\"" + fmt(y0 + 20.0) +
         "\" font-size=\"14\">" + label + "</text>\n";
  svg += "<rect x=\"" + fmt(kLeft) + "\" y=\"" + fmt(y0 + kTop) + "\" width=\"" + fmt(plot_w) +
         "\" height=\"" + fmt(plot_h) + "\" fill=\"none\" stroke=\"#444\"/>\n";
  for (int t = 0; t <= kTicks; ++t) {
    const double f = static_cast<double>(t) / kTicks;
    const double xv = xr.lo + f * (xr.hi - xr.lo);
    const double yv = yr.lo + f * (yr.hi - yr.lo);
    svg += "<text x=\"" + fmt(px(xv)) + "\" y=\"" + fmt(y0 + kPanelHeight - kBottom + 16.0) +
           "\" font-size=\"10\" text-anchor=\"middle\">" + fmt(xv) + "</text>\n";
    svg += "<text x=\"" + fmt(kLeft - 6.0) + "\" y=\"" + fmt(py(yv) + 3.0) +
           "\" font-size=\"10\" text-anchor=\"end\">" + fmt(yv) + "</text>\n";
  }
  svg += "<text x=\"" + fmt(kLeft + plot_w / 2.0) + "\" y=\"" + fmt(y0 + kPanelHeight - 8.0) +
         "\" font-size=\"11\" text-anchor=\"middle\">epoch</text>\n";

  std::string points;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i > 0) points += ' ';
    points += fmt(px(xs[i])) + "," + fmt(py(ys[i]));
  }
  svg += "<polyline fill=\"none\" stroke=\"" + std::string(colour) +
         "\" stroke-width=\"1.5\" points=\"" + points + "\"/>\n";
  if (xs.size() == 1) {
    svg += "<circle cx=\"" + fmt(px(xs[0])) + "\" cy=\"" + fmt(py(ys[0])) + "\" r=\"3\" fill=\"" +
           colour + "\"/>\n";
  }
  svg += "</g>\n";
}

}  // namespace

std::string render_convergence_svg(const ConvergenceLog& log) {
  if (log.empty()) throw std::invalid_argument("convergence plot: empty log");
  std::vector<double> epochs;
  std::vector<double> loss;
  std::vector<double> ndcg;
  for (const auto& r : log) {
    if (!std::isfinite(r.loss_total) || !std::isfinite(r.ndcg20_valid))
      throw std::invalid_argument("convergence plot: non-finite value at epoch " +
                                  std::to_string(r.epoch));
    if (!epochs.empty() && static_cast<double>(r.epoch) <= epochs.back())
      throw std::invalid_argument("convergence plot: epochs must increase");
    epochs.push_back(static_cast<double>(r.epoch));
    loss.push_back(r.loss_total);
    ndcg.push_back(r.ndcg20_valid);
  }

  std::string svg = "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fmt(kWidth) + "\" height=\"" +
         fmt(2.0 * kPanelHeight) + "\" viewBox=\"0 0 " + fmt(kWidth) + " " +
         fmt(2.0 * kPanelHeight) + "\">\n";
  svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  panel(svg, 0.0, "loss", "Training loss", epochs, loss, "#1f77b4");
  panel(svg, kPanelHeight, "ndcg20_valid", "Validation NDCG@20", epochs, ndcg, "#d62728");
  svg += "</svg>\n";
  return svg;
}

void emit_convergence_plot(const ConvergenceLog& log, const std::filesystem::path& out_path) {
  write_text_file(out_path, render_convergence_svg(log));
}

}  // namespace crane
