#include "confae/cli/svg.hpp"

#include "confae/errors.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <array>
#include <cmath>

namespace confae::cli {

namespace {

constexpr double kWidth = 520.0;
constexpr double kHeight = 480.0;
constexpr double kMargin = 40.0;

// viridis sampled at eight stops
constexpr std::array<std::array<double, 3>, 8> kStops{{{68, 1, 84},
                                                        {70, 50, 126},
                                                        {54, 92, 141},
                                                        {39, 127, 142},
                                                        {31, 161, 135},
                                                        {74, 193, 109},
                                                        {160, 218, 57},
                                                        {253, 231, 37}}};

std::string color(double t) {
  t = std::clamp(t, 0.0, 1.0) * (kStops.size() - 1);
  const auto i = std::min(static_cast<std::size_t>(t), kStops.size() - 2);
  const double f = t - static_cast<double>(i);
  std::array<int, 3> rgb{};
  for (int c = 0; c < 3; ++c) rgb[c] = static_cast<int>(std::lround(kStops[i][c] * (1 - f) + kStops[i + 1][c] * f));
  return fmt::format("#{:02x}{:02x}{:02x}", rgb[0], rgb[1], rgb[2]);
}

std::string escape(std::string_view s) {
  std::string out;
  for (char ch : s) {
    switch (ch) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += ch;
    }
  }
  return out;
}

std::string header(std::string_view title) {
  return fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{0}\" height=\"{1}\" viewBox=\"0 0 {0} {1}\">\n"
      "<title>{2}</title>\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      "<text x=\"{3}\" y=\"24\" font-family=\"sans-serif\" font-size=\"14\">{2}</text>\n",
      kWidth, kHeight, escape(title), kMargin);
}

// Maps [lo, hi] onto [a, b]; a degenerate range lands in the middle.
double rescale(double v, double lo, double hi, double a, double b) {
  if (!(hi > lo)) return 0.5 * (a + b);
  return a + (v - lo) / (hi - lo) * (b - a);
}

}  // namespace

std::string scatter_svg(std::span<const ScatterPoint> points, std::string_view title, std::string_view field) {
  if (points.empty()) throw UsageError("scatter_svg: no points");
  double xmin = INFINITY, xmax = -INFINITY, ymin = INFINITY, ymax = -INFINITY;
  double vmin = INFINITY, vmax = -INFINITY;
  for (const ScatterPoint& p : points) {
    xmin = std::min(xmin, p.x);
    xmax = std::max(xmax, p.x);
    ymin = std::min(ymin, p.y);
    ymax = std::max(ymax, p.y);
    if (std::isfinite(p.value)) {
      vmin = std::min(vmin, p.value);
      vmax = std::max(vmax, p.value);
    }
  }
  if (!std::isfinite(vmin)) vmin = vmax = 0.0;
  // square data extent keeps the latent aspect ratio
  const double span = std::max({xmax - xmin, ymax - ymin, 0.0});
  const double cx = 0.5 * (xmin + xmax);
  const double cy = 0.5 * (ymin + ymax);
  const double plot = kHeight - 2 * kMargin;

  std::string out = header(title);
  out += fmt::format("<metadata>{{\"field\":\"{}\",\"min\":{:.17g},\"max\":{:.17g},\"points\":{}}}</metadata>\n",
                     escape(field), vmin, vmax, points.size());
  out += "<g stroke=\"none\">\n";
  for (const ScatterPoint& p : points) {
    const double x = span > 0 ? kMargin + (p.x - cx + 0.5 * span) / span * plot : kMargin + 0.5 * plot;
    const double y = span > 0 ? kHeight - kMargin - (p.y - cy + 0.5 * span) / span * plot : kMargin + 0.5 * plot;
    const std::string fill = std::isfinite(p.value) ? color(rescale(p.value, vmin, vmax, 0.0, 1.0)) : "#999999";
    out += fmt::format("<circle cx=\"{:.2f}\" cy=\"{:.2f}\" r=\"2.5\" fill=\"{}\"/>\n", x, y, fill);
  }
  out += "</g>\n";

  // color bar
  const double bx = kMargin + plot + 16;
  for (int i = 0; i < 50; ++i) {
    const double t = 1.0 - i / 49.0;
    out += fmt::format("<rect x=\"{:.2f}\" y=\"{:.2f}\" width=\"14\" height=\"{:.2f}\" fill=\"{}\"/>\n", bx,
                       kMargin + i * plot / 50.0, plot / 50.0 + 0.5, color(t));
  }
  out += fmt::format("<text x=\"{:.2f}\" y=\"{:.2f}\" font-family=\"sans-serif\" font-size=\"10\">{:.4g}</text>\n", bx - 4,
                     kMargin - 4, vmax);
  out += fmt::format("<text x=\"{:.2f}\" y=\"{:.2f}\" font-family=\"sans-serif\" font-size=\"10\">{:.4g}</text>\n", bx - 4,
                     kMargin + plot + 12, vmin);
  out += "</svg>\n";
  return out;
}

std::string strip_svg(std::span<const StripSeries> series, std::string_view title) {
  if (series.empty()) throw UsageError("strip_svg: no series");
  double lo = INFINITY;
  double hi = -INFINITY;
  for (const StripSeries& s : series) {
    for (double v : s.values) {
      if (std::isfinite(v) && v > 0) {
        lo = std::min(lo, std::log10(v));
        hi = std::max(hi, std::log10(v));
      }
    }
  }
  if (!std::isfinite(lo)) lo = hi = 0.0;
  lo = std::floor(lo);
  hi = std::max(std::ceil(hi), lo + 1.0);

  const double left = kMargin + 60;
  const double right = kWidth - kMargin;
  const double band = (kHeight - 2 * kMargin - 30) / static_cast<double>(series.size());

  std::string out = header(title);
  out += "<metadata>{\"axis\":\"log10\",\"series\":[";
  for (std::size_t k = 0; k < series.size(); ++k) {
    double sum = 0.0;
    std::size_t used = 0;
    for (double v : series[k].values)
      if (std::isfinite(v)) {
        sum += v;
        ++used;
      }
    out += fmt::format("{}{{\"name\":\"{}\",\"mean\":{:.17g},\"used\":{},\"excluded\":{}}}", k ? "," : "",
                       escape(series[k].name), used ? sum / static_cast<double>(used) : 0.0, used,
                       series[k].values.size() - used);
  }
  out += "]}</metadata>\n";

  for (std::size_t k = 0; k < series.size(); ++k) {
    const StripSeries& s = series[k];
    const double top = kMargin + 10 + band * static_cast<double>(k);
    out += fmt::format("<text x=\"{}\" y=\"{:.2f}\" font-family=\"sans-serif\" font-size=\"12\">{}</text>\n", kMargin,
                       top + 0.5 * band, escape(s.name));
    double sum = 0.0;
    std::size_t used = 0;
    for (std::size_t i = 0; i < s.values.size(); ++i) {
      const double v = s.values[i];
      if (!std::isfinite(v) || v <= 0) continue;
      sum += v;
      ++used;
      // golden-ratio jitter: deterministic and evenly spread
      const double jitter = std::fmod(static_cast<double>(i) * 0.6180339887498949, 1.0);
      out += fmt::format("<circle cx=\"{:.2f}\" cy=\"{:.2f}\" r=\"1.5\" fill=\"#3b528b\" fill-opacity=\"0.5\"/>\n",
                         rescale(std::log10(v), lo, hi, left, right), top + 0.15 * band + jitter * 0.7 * band);
    }
    if (used > 0) {
      const double mx = rescale(std::log10(sum / static_cast<double>(used)), lo, hi, left, right);
      out += fmt::format("<line x1=\"{0:.2f}\" x2=\"{0:.2f}\" y1=\"{1:.2f}\" y2=\"{2:.2f}\" stroke=\"#d62728\" stroke-width=\"2\"/>\n",
                         mx, top + 0.05 * band, top + 0.95 * band);
    }
  }
  const double axis_y = kHeight - kMargin - 10;
  out += fmt::format("<line x1=\"{}\" x2=\"{}\" y1=\"{:.2f}\" y2=\"{:.2f}\" stroke=\"black\"/>\n", left, right, axis_y, axis_y);
  for (double t = lo; t <= hi + 1e-9; t += 1.0) {
    const double x = rescale(t, lo, hi, left, right);
    out += fmt::format("<text x=\"{:.2f}\" y=\"{:.2f}\" font-family=\"sans-serif\" font-size=\"10\">1e{}</text>\n", x - 8,
                       axis_y + 14, static_cast<int>(t));
  }
  out += "</svg>\n";
  return out;
}

}  // namespace confae::cli
