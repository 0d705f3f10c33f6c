#pragma once

// Static SVG charts: stacked variance fractions, residual traces and latent scatter.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "nd/decomp/variance.hpp"

namespace nd::app {

inline std::string xml_escape(const std::string& s) {
  std::string out;
  for (char ch : s) {
    switch (ch) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      case '\'': out += "&apos;"; break;
      default: out.push_back(ch);
    }
  }
  return out;
}

namespace detail {

inline std::string px(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

inline const char* palette(std::size_t k) {
  static const char* colors[] = {"#4e79a7", "#f28e2b", "#59a14f", "#e15759", "#76b7b2",
                                 "#edc948", "#b07aa1", "#ff9da7", "#9c755f", "#bab0ac"};
  return colors[k % 10];
}

class Svg {
 public:
  Svg(double w, double h) : w_(w), h_(h) {}
  void rect(double x, double y, double w, double h, const std::string& fill, const std::string& extra = "") {
    body_ << "<rect x=\"" << px(x) << "\" y=\"" << px(y) << "\" width=\"" << px(w) << "\" height=\"" << px(h)
          << "\" fill=\"" << fill << "\"" << extra << "/>\n";
  }
  void line(double x1, double y1, double x2, double y2, const std::string& stroke) {
    body_ << "<line x1=\"" << px(x1) << "\" y1=\"" << px(y1) << "\" x2=\"" << px(x2) << "\" y2=\"" << px(y2)
          << "\" stroke=\"" << stroke << "\"/>\n";
  }
  void text(double x, double y, const std::string& s, const std::string& anchor = "start", int size = 11) {
    body_ << "<text x=\"" << px(x) << "\" y=\"" << px(y) << "\" font-size=\"" << size << "\" text-anchor=\"" << anchor
          << "\">" << xml_escape(s) << "</text>\n";
  }
  void polyline(const std::vector<std::pair<double, double>>& pts, const std::string& stroke,
                const std::string& cls = "series") {
    body_ << "<polyline class=\"" << cls << "\" fill=\"none\" stroke-width=\"0.8\" stroke=\"" << stroke
          << "\" points=\"";
    for (std::size_t k = 0; k < pts.size(); ++k) body_ << (k ? " " : "") << px(pts[k].first) << ',' << px(pts[k].second);
    body_ << "\"/>\n";
  }
  void circle(double x, double y, double r, const std::string& fill, const std::string& cls = "point") {
    body_ << "<circle class=\"" << cls << "\" cx=\"" << px(x) << "\" cy=\"" << px(y) << "\" r=\"" << px(r)
          << "\" fill=\"" << fill << "\" fill-opacity=\"0.7\"/>\n";
  }
  void write(std::ostream& os) const {
    os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
       << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << px(w_) << "\" height=\"" << px(h_)
       << "\" viewBox=\"0 0 " << px(w_) << ' ' << px(h_) << "\" font-family=\"sans-serif\">\n"
       << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
       << body_.str() << "</svg>\n";
  }

 private:
  double w_, h_;
  std::ostringstream body_;
};

}  // namespace detail

/// One stacked bar per feature: term fractions, then noise.
inline void write_fractions_svg(std::ostream& os, const decomp::VarianceReport& r) {
  const double bar = 18.0, gap = 6.0, left = 60.0, top = 30.0, height = 240.0;
  const auto nf = r.features.size();
  const double width = left + static_cast<double>(nf) * (bar + gap) + 140.0;
  detail::Svg svg(width, top + height + 60.0);
  svg.text(left, 18, "variance fractions per feature", "start", 13);
  svg.line(left - 4, top, left - 4, top + height, "black");
  for (int t = 0; t <= 4; ++t) {
    const double y = top + height * (1.0 - t / 4.0);
    svg.line(left - 8, y, left - 4, y, "black");
    svg.text(left - 10, y + 4, detail::px(t / 4.0).substr(0, 4), "end", 10);
  }
  for (std::size_t j = 0; j < nf; ++j) {
    const auto& f = r.features[j];
    const double x = left + static_cast<double>(j) * (bar + gap);
    double acc = 0.0;
    auto segment = [&](double v, const std::string& color, const std::string& name) {
      const double h = std::clamp(v, 0.0, std::max(0.0, 1.0 - acc)) * height;
      svg.rect(x, top + height * (1.0 - acc) - h, bar, h, color,
               " class=\"segment\" data-term=\"" + xml_escape(name) + "\"");
      acc += h / height;
    };
    for (std::size_t k = 0; k < f.fractions.size(); ++k) segment(f.fractions[k], detail::palette(k), r.term_labels[k]);
    segment(f.noise_fraction, "#cccccc", "noise");
    svg.text(x + bar / 2, top + height + 14, r.feature_names[j], "middle", 9);
  }
  const double lx = left + static_cast<double>(nf) * (bar + gap) + 20.0;
  for (std::size_t k = 0; k <= r.term_labels.size(); ++k) {
    const bool noise = k == r.term_labels.size();
    svg.rect(lx, top + 18.0 * static_cast<double>(k), 12, 12, noise ? "#cccccc" : detail::palette(k));
    svg.text(lx + 18, top + 18.0 * static_cast<double>(k) + 10, noise ? "noise" : r.term_labels[k]);
  }
  svg.write(os);
}

struct LinePanel {
  std::string title;
  std::vector<std::vector<std::pair<double, double>>> series;  // (x, y) per series
};

/// Panels side by side, each with its own y range and every series as one polyline.
inline void write_lines_svg(std::ostream& os, const std::vector<LinePanel>& panels, const std::string& xlabel,
                            const std::string& ylabel) {
  const double pw = 320.0, ph = 240.0, left = 60.0, top = 40.0, pad = 40.0;
  detail::Svg svg(left + static_cast<double>(panels.size()) * (pw + pad), top + ph + 60.0);
  for (std::size_t p = 0; p < panels.size(); ++p) {
    const auto& panel = panels[p];
    double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
    for (const auto& s : panel.series)
      for (const auto& [x, y] : s) {
        x0 = std::min(x0, x);
        x1 = std::max(x1, x);
        y0 = std::min(y0, y);
        y1 = std::max(y1, y);
      }
    if (!std::isfinite(x0)) x0 = 0, x1 = 1, y0 = -1, y1 = 1;
    if (x1 <= x0) x1 = x0 + 1;
    if (y1 <= y0) y0 -= 1, y1 += 1;
    const double ox = left + static_cast<double>(p) * (pw + pad);
    auto sx = [&](double x) { return ox + (x - x0) / (x1 - x0) * pw; };
    auto sy = [&](double y) { return top + (1.0 - (y - y0) / (y1 - y0)) * ph; };
    svg.rect(ox, top, pw, ph, "none", " stroke=\"black\"");
    svg.text(ox + pw / 2, top - 10, panel.title, "middle", 13);
    svg.text(ox - 4, top + 4, detail::px(y1), "end", 9);
    svg.text(ox - 4, top + ph, detail::px(y0), "end", 9);
    svg.text(ox, top + ph + 14, detail::px(x0), "start", 9);
    svg.text(ox + pw, top + ph + 14, detail::px(x1), "end", 9);
    if (y0 < 0.0 && y1 > 0.0) svg.line(ox, sy(0.0), ox + pw, sy(0.0), "#999999");
    for (std::size_t k = 0; k < panel.series.size(); ++k) {
      std::vector<std::pair<double, double>> pts;
      for (const auto& [x, y] : panel.series[k]) pts.emplace_back(sx(x), sy(y));
      svg.polyline(pts, detail::palette(k));
    }
    svg.text(ox + pw / 2, top + ph + 32, xlabel, "middle");
  }
  svg.text(14, top + ph / 2, ylabel, "start");
  svg.write(os);
}

/// Scatter of two coordinates coloured by a group label (0, 1, ...).
inline void write_scatter_svg(std::ostream& os, const Eigen::RowVectorXd& x, const Eigen::RowVectorXd& y,
                              const std::vector<int>& group, const std::string& xlabel, const std::string& ylabel,
                              const std::string& title) {
  const double w = 360.0, h = 360.0, left = 60.0, top = 40.0;
  detail::Svg svg(left + w + 100.0, top + h + 50.0);
  double x0 = x.size() ? x.minCoeff() : 0.0, x1 = x.size() ? x.maxCoeff() : 1.0;
  double y0 = y.size() ? y.minCoeff() : 0.0, y1 = y.size() ? y.maxCoeff() : 1.0;
  if (x1 <= x0) x0 -= 1, x1 += 1;
  if (y1 <= y0) y0 -= 1, y1 += 1;
  svg.rect(left, top, w, h, "none", " stroke=\"black\"");
  svg.text(left + w / 2, top - 12, title, "middle", 13);
  int groups = 0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const int g = group.empty() ? 0 : group[static_cast<std::size_t>(i)];
    groups = std::max(groups, g + 1);
    svg.circle(left + (x[i] - x0) / (x1 - x0) * w, top + (1.0 - (y[i] - y0) / (y1 - y0)) * h, 2.2,
               detail::palette(static_cast<std::size_t>(g)));
  }
  for (int g = 0; g < groups; ++g) {
    svg.rect(left + w + 20, top + 18.0 * g, 12, 12, detail::palette(static_cast<std::size_t>(g)));
    svg.text(left + w + 38, top + 18.0 * g + 10, "group " + std::to_string(g));
  }
  svg.text(left + w / 2, top + h + 30, xlabel, "middle");
  svg.text(10, top + h / 2, ylabel, "start");
  svg.write(os);
}

}  // namespace nd::app
