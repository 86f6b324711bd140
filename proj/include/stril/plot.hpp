#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "stril/pvrnn.hpp"

namespace stril {

// Scatter of 2-D PCA-projected representations. Numeric labels are colored
// by their midrank percentile on a 256-step monotone ramp; categorical
// labels get a fixed palette. A CSV of (traj_id, x, y, label, percentile)
// rides along with each SVG.
struct PlotPoint {
  std::string traj_id;
  std::vector<double> rep;
  std::string label_text;            // categorical value (demo id) if used
  std::optional<double> label_value; // numeric value (ri / el / reward)
};

struct PlotResult {
  std::string svg;
  std::string csv;
};

PlotResult plot_representations(const std::vector<PlotPoint>& points,
                                const std::string& label_name, bool categorical);

}  // namespace stril
