#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace confae::cli {

struct ScatterPoint {
  double x = 0.0;
  double y = 0.0;
  double value = 0.0;
};

/// Latent scatter colored by `value` on a sequential scale whose endpoints
/// are the data min and max; both are written to the SVG metadata.
std::string scatter_svg(std::span<const ScatterPoint> points, std::string_view title, std::string_view field);

struct StripSeries {
  std::string name;
  std::vector<double> values;  // non-finite entries are skipped and counted
};

/// One horizontal strip per series on a log10 axis, with a mean marker.
std::string strip_svg(std::span<const StripSeries> series, std::string_view title);

}  // namespace confae::cli
