#include "stril/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

#include "stril/pca.hpp"
#include "stril/stats.hpp"

namespace stril {

namespace {

struct Rgb {
  int r, g, b;
};

// 256-step monotone ramp, dark blue to warm yellow; every channel is
// monotone in the percentile so the ordering survives in any channel.
Rgb ramp_color(double t) {
  t = std::clamp(t, 0.0, 1.0);
  const int step = std::min(255, int(t * 256.0));
  const double u = step / 255.0;
  return Rgb{13 + int(u * (240 - 13)), 8 + int(u * (249 - 8)),
             135 + int(u * (33 - 135))};
}

const char* kPalette[10] = {"#4e79a7", "#f28e2b", "#e15759", "#76b7b2", "#59a14f",
                            "#edc948", "#b07aa1", "#ff9da7", "#9c755f", "#bab0ac"};

std::string fmt(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

}  // namespace

PlotResult plot_representations(const std::vector<PlotPoint>& points,
                                const std::string& label_name, bool categorical) {
  if (points.size() < 2)
    throw std::invalid_argument("plot_representations: need at least two points");
  const int d = int(points.front().rep.size());
  Tensor rows(std::vector<int>{int(points.size()), d});
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (int(points[i].rep.size()) != d)
      throw std::invalid_argument("plot_representations: ragged representations");
    for (int j = 0; j < d; ++j) rows.at(int(i), j) = points[i].rep[std::size_t(j)];
  }
  const int k = std::min(2, d);
  const auto pca = pca_project(rows, k);

  std::vector<double> xs(points.size()), ys(points.size(), 0.0);
  for (std::size_t i = 0; i < points.size(); ++i) {
    xs[i] = pca.projected.at(int(i), 0);
    if (k > 1) ys[i] = pca.projected.at(int(i), 1);
  }

  std::vector<double> percentiles(points.size(), 0.5);
  std::map<std::string, int> categories;
  if (categorical) {
    for (const auto& p : points)
      if (categories.emplace(p.label_text, int(categories.size())).second) {
      }
  } else {
    std::vector<double> values;
    values.reserve(points.size());
    for (const auto& p : points) {
      if (!p.label_value.has_value())
        throw std::invalid_argument("plot_representations: missing numeric label");
      values.push_back(*p.label_value);
    }
    percentiles = midrank_percentiles(values);
  }

  const double x_lo = *std::min_element(xs.begin(), xs.end());
  const double x_hi = *std::max_element(xs.begin(), xs.end());
  const double y_lo = *std::min_element(ys.begin(), ys.end());
  const double y_hi = *std::max_element(ys.begin(), ys.end());
  const double x_span = std::max(x_hi - x_lo, 1e-9);
  const double y_span = std::max(y_hi - y_lo, 1e-9);
  const double w = 640, h = 480, margin = 48;

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << int(w)
      << "\" height=\"" << int(h) << "\" viewBox=\"0 0 " << int(w) << ' ' << int(h)
      << "\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg << "<text x=\"" << int(w / 2) << "\" y=\"20\" text-anchor=\"middle\" "
      << "font-family=\"sans-serif\" font-size=\"14\">representations by "
      << label_name << "</text>\n";

  std::ostringstream csv;
  csv << "traj_id,x,y,label,percentile\n";
  for (std::size_t i = 0; i < points.size(); ++i) {
    const double px = margin + (xs[i] - x_lo) / x_span * (w - 2 * margin);
    const double py = h - margin - (ys[i] - y_lo) / y_span * (h - 2 * margin);
    std::string color;
    if (categorical) {
      color = kPalette[std::size_t(categories.at(points[i].label_text)) % 10];
    } else {
      const Rgb c = ramp_color(percentiles[i]);
      char buf[16];
      std::snprintf(buf, sizeof(buf), "#%02x%02x%02x", c.r, c.g, c.b);
      color = buf;
    }
    svg << "<circle cx=\"" << fmt(px) << "\" cy=\"" << fmt(py)
        << "\" r=\"3\" fill=\"" << color << "\" fill-opacity=\"0.8\"/>\n";
    csv << points[i].traj_id << ',' << fmt(xs[i]) << ',' << fmt(ys[i]) << ',';
    if (categorical) csv << points[i].label_text;
    else csv << fmt(*points[i].label_value);
    csv << ',' << fmt(percentiles[i]) << '\n';
  }

  if (categorical) {
    int row = 0;
    for (const auto& [name, idx] : categories) {
      const double ly = margin + 16.0 * row;
      svg << "<rect x=\"" << fmt(w - margin - 110) << "\" y=\"" << fmt(ly - 9)
          << "\" width=\"10\" height=\"10\" fill=\"" << kPalette[std::size_t(idx) % 10]
          << "\"/>\n";
      svg << "<text x=\"" << fmt(w - margin - 95) << "\" y=\"" << fmt(ly)
          << "\" font-family=\"sans-serif\" font-size=\"11\">" << name << "</text>\n";
      ++row;
    }
  } else {
    // the 256-step ramp as a legend bar
    const double bar_w = (w - 2 * margin) / 256.0;
    for (int s = 0; s < 256; ++s) {
      const Rgb c = ramp_color((s + 0.5) / 256.0);
      char buf[16];
      std::snprintf(buf, sizeof(buf), "#%02x%02x%02x", c.r, c.g, c.b);
      svg << "<rect x=\"" << fmt(margin + s * bar_w) << "\" y=\"" << fmt(h - 24)
          << "\" width=\"" << fmt(bar_w + 0.5) << "\" height=\"8\" fill=\"" << buf
          << "\"/>\n";
    }
    svg << "<text x=\"" << fmt(margin) << "\" y=\"" << fmt(h - 30)
        << "\" font-family=\"sans-serif\" font-size=\"10\">low percentile</text>\n";
    svg << "<text x=\"" << fmt(w - margin) << "\" y=\"" << fmt(h - 30)
        << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"10\">"
        << "high percentile</text>\n";
  }
  svg << "</svg>\n";

  PlotResult out;
  out.svg = svg.str();
  out.csv = csv.str();
  return out;
}

}  // namespace stril
