#include "mixedabc/plot.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "mixedabc/io.hpp"
#include "mixedabc/stats.hpp"

namespace mixedabc::plot {

namespace {

std::string num(double v) { return io::format_fixed(v, 2); }

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

class Svg {
 public:
  Svg(double w, double h) : w_(w), h_(h) {}

  void rect(double x, double y, double w, double h, const std::string& fill, const std::string& extra = "") {
    os_ << "<rect x=\"" << num(x) << "\" y=\"" << num(y) << "\" width=\"" << num(w) << "\" height=\"" << num(h)
        << "\" fill=\"" << fill << "\"" << extra << "/>\n";
  }
  void line(double x1, double y1, double x2, double y2, const std::string& stroke, double width = 1.0) {
    os_ << "<line x1=\"" << num(x1) << "\" y1=\"" << num(y1) << "\" x2=\"" << num(x2) << "\" y2=\"" << num(y2)
        << "\" stroke=\"" << stroke << "\" stroke-width=\"" << num(width) << "\"/>\n";
  }
  void circle(double x, double y, double r, const std::string& fill) {
    os_ << "<circle cx=\"" << num(x) << "\" cy=\"" << num(y) << "\" r=\"" << num(r) << "\" fill=\"" << fill
        << "\" fill-opacity=\"0.5\"/>\n";
  }
  void text(double x, double y, const std::string& s, const std::string& anchor = "start", int size = 12) {
    os_ << "<text x=\"" << num(x) << "\" y=\"" << num(y) << "\" font-size=\"" << size << "\" text-anchor=\"" << anchor
        << "\" font-family=\"sans-serif\">" << escape(s) << "</text>\n";
  }
  void polyline(const std::vector<std::pair<double, double>>& pts, const std::string& stroke, double width = 1.5) {
    os_ << "<polyline fill=\"none\" stroke=\"" << stroke << "\" stroke-width=\"" << num(width) << "\" points=\"";
    for (std::size_t i = 0; i < pts.size(); ++i) os_ << (i ? " " : "") << num(pts[i].first) << "," << num(pts[i].second);
    os_ << "\"/>\n";
  }

  [[nodiscard]] std::string str() const {
    std::ostringstream out;
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(w_) << "\" height=\"" << num(h_)
        << "\" viewBox=\"0 0 " << num(w_) << " " << num(h_) << "\">\n";
    out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    out << os_.str() << "</svg>\n";
    return out.str();
  }

 private:
  double w_;
  double h_;
  std::ostringstream os_;
};

struct Axis {
  double lo;
  double hi;
  double px_lo;
  double px_hi;

  [[nodiscard]] double operator()(double v) const {
    if (hi == lo) return 0.5 * (px_lo + px_hi);
    return px_lo + (v - lo) / (hi - lo) * (px_hi - px_lo);
  }
};

std::pair<double, double> range_of(std::span<const double> a, std::span<const double> b = {}) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (double v : a) lo = std::min(lo, v), hi = std::max(hi, v);
  for (double v : b) lo = std::min(lo, v), hi = std::max(hi, v);
  if (!std::isfinite(lo)) return {0.0, 1.0};
  if (hi == lo) return {lo - 0.5, hi + 0.5};
  return {lo, hi};
}

void frame(Svg& svg, const Axis& x, const Axis& y, const std::string& xlabel, const std::string& ylabel) {
  svg.line(x.px_lo, y.px_lo, x.px_hi, y.px_lo, "#333");
  svg.line(x.px_lo, y.px_lo, x.px_lo, y.px_hi, "#333");
  for (int t = 0; t <= 4; ++t) {
    const double fx = x.lo + (x.hi - x.lo) * t / 4.0;
    svg.text(x(fx), y.px_lo + 16, io::format_fixed(fx, 3), "middle", 10);
    const double fy = y.lo + (y.hi - y.lo) * t / 4.0;
    svg.text(x.px_lo - 6, y(fy) + 3, io::format_fixed(fy, 3), "end", 10);
  }
  svg.text(0.5 * (x.px_lo + x.px_hi), y.px_lo + 34, xlabel, "middle");
  svg.text(14, 0.5 * (y.px_lo + y.px_hi), ylabel, "start");
}

}  // namespace

Curve kde_curve(std::span<const double> values, std::span<const double> weights, std::size_t points) {
  Curve c;
  if (values.empty()) return c;
  const double h = stats::silverman_bandwidth(values, weights);
  auto [lo, hi] = range_of(values);
  lo -= 3.0 * h;
  hi += 3.0 * h;
  for (std::size_t i = 0; i < points; ++i) {
    c.x.push_back(lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(points - 1));
  }
  c.y = stats::kde(values, weights, c.x);
  return c;
}

double mode(const Curve& c) {
  const auto it = std::max_element(c.y.begin(), c.y.end());
  return c.x[static_cast<std::size_t>(it - c.y.begin())];
}

std::string diverging_color(double v) {
  v = std::clamp(v, -1.0, 1.0);
  // Endpoints: #2166ac (v = -1), white (0), #b2182b (v = +1).
  const double t = std::abs(v);
  const int end_r = v < 0 ? 0x21 : 0xb2;
  const int end_g = v < 0 ? 0x66 : 0x18;
  const int end_b = v < 0 ? 0xac : 0x2b;
  auto mix = [&](int e) { return static_cast<int>(std::lround(255.0 + (e - 255.0) * t)); };
  char buf[8];
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", mix(end_r), mix(end_g), mix(end_b));
  return buf;
}

std::string parity_svg(std::span<const double> actual, std::span<const double> predicted, const std::string& title) {
  Svg svg(480, 480);
  const auto [lo, hi] = range_of(actual, predicted);
  const Axis x{lo, hi, 70, 450};
  const Axis y{lo, hi, 420, 40};
  frame(svg, x, y, "actual", "predicted");
  svg.line(x(lo), y(lo), x(hi), y(hi), "#999", 1.0);
  for (std::size_t i = 0; i < actual.size(); ++i) svg.circle(x(actual[i]), y(predicted[i]), 2.0, "#1f77b4");
  svg.text(240, 22, title, "middle", 14);
  return svg.str();
}

std::string importance_svg(const std::vector<std::pair<std::string, double>>& ranking, std::size_t top) {
  const std::size_t n = std::min(top, ranking.size());
  Svg svg(560, 60 + 28.0 * static_cast<double>(n));
  double max_gain = 0.0;
  for (std::size_t i = 0; i < n; ++i) max_gain = std::max(max_gain, ranking[i].second);
  const Axis x{0.0, max_gain > 0 ? max_gain : 1.0, 160, 520};
  for (std::size_t i = 0; i < n; ++i) {
    const double yy = 40 + 28.0 * static_cast<double>(i);
    svg.text(152, yy + 15, ranking[i].first, "end");
    svg.rect(x(0.0), yy, x(ranking[i].second) - x(0.0), 20, "#4c72b0");
    svg.text(x(ranking[i].second) + 4, yy + 15, io::format_fixed(ranking[i].second, 3), "start", 10);
  }
  svg.text(280, 22, "total gain", "middle", 14);
  return svg.str();
}

std::string posterior_svg(const std::vector<PosteriorPanel>& panels, const std::string& title) {
  const double panel_h = 170;
  Svg svg(560, 40 + panel_h * static_cast<double>(panels.size()));
  svg.text(280, 22, title, "middle", 14);
  for (std::size_t p = 0; p < panels.size(); ++p) {
    const auto& pn = panels[p];
    const double top = 40 + panel_h * static_cast<double>(p);
    const auto curve = kde_curve(pn.values, pn.weights, 200);
    if (curve.x.empty()) continue;
    const double ymax = *std::max_element(curve.y.begin(), curve.y.end());
    const Axis x{curve.x.front(), curve.x.back(), 70, 530};
    const Axis y{0.0, ymax > 0 ? ymax : 1.0, top + 100, top + 10};
    frame(svg, x, y, pn.feature, "density");
    std::vector<std::pair<double, double>> pts;
    for (std::size_t i = 0; i < curve.x.size(); ++i) pts.emplace_back(x(curve.x[i]), y(curve.y[i]));
    svg.polyline(pts, "#1f77b4");
    // Box: whiskers at the 95% interval, box over the 50% interval.
    const double by = top + 132;
    svg.line(x(pn.ci95_lo), by, x(pn.ci95_hi), by, "#333");
    svg.line(x(pn.ci95_lo), by - 6, x(pn.ci95_lo), by + 6, "#333");
    svg.line(x(pn.ci95_hi), by - 6, x(pn.ci95_hi), by + 6, "#333");
    svg.rect(x(pn.ci50_lo), by - 8, std::max(1.0, x(pn.ci50_hi) - x(pn.ci50_lo)), 16, "#aec7e8",
             " stroke=\"#333\"");
    svg.line(x(pn.median), by - 8, x(pn.median), by + 8, "#d62728", 2.0);
    svg.circle(x(pn.mean), by, 3.0, "#333");
  }
  return svg.str();
}

std::string forward_svg(std::span<const double> observed, std::span<const double> predicted, const std::string& title) {
  Svg svg(560, 380);
  const auto obs = kde_curve(observed, {}, 200);
  const auto pred = kde_curve(predicted, {}, 200);
  const auto [lo, hi] = range_of(obs.x, pred.x);
  constexpr std::size_t kBins = 30;
  const double width = (hi - lo) / kBins;
  auto hist = [&](std::span<const double> xs) {
    std::vector<double> h(kBins, 0.0);
    for (double v : xs) h[std::min(kBins - 1, static_cast<std::size_t>((v - lo) / width))] += 1.0;
    for (auto& c : h) c /= static_cast<double>(std::max<std::size_t>(xs.size(), 1)) * width;
    return h;
  };
  const auto ho = hist(observed);
  const auto hp = hist(predicted);
  double ymax = 0.0;
  for (const auto* v : {&ho, &hp, &obs.y, &pred.y}) {
    for (double d : *v) ymax = std::max(ymax, d);
  }
  const Axis x{lo, hi, 70, 530};
  const Axis y{0.0, ymax > 0 ? ymax : 1.0, 320, 40};
  frame(svg, x, y, "target", "density");
  for (std::size_t b = 0; b < kBins; ++b) {
    const double x0 = x(lo + width * static_cast<double>(b));
    const double x1 = x(lo + width * static_cast<double>(b + 1));
    svg.rect(x0, y(ho[b]), x1 - x0, y(0.0) - y(ho[b]), "#1f77b4", " fill-opacity=\"0.35\"");
    svg.rect(x0, y(hp[b]), x1 - x0, y(0.0) - y(hp[b]), "#ff7f0e", " fill-opacity=\"0.35\"");
  }
  for (const auto& [curve, color] : {std::pair{&obs, "#1f77b4"}, std::pair{&pred, "#ff7f0e"}}) {
    std::vector<std::pair<double, double>> pts;
    for (std::size_t i = 0; i < curve->x.size(); ++i) pts.emplace_back(x(curve->x[i]), y(curve->y[i]));
    svg.polyline(pts, color);
  }
  svg.rect(400, 50, 12, 12, "#1f77b4");
  svg.text(418, 60, "observed");
  svg.rect(400, 68, 12, 12, "#ff7f0e");
  svg.text(418, 78, "predicted");
  svg.text(280, 22, title, "middle", 14);
  return svg.str();
}

std::string heatmap_svg(const std::vector<std::string>& labels, const Matrix& values, const std::string& title) {
  const double cell = 28;
  const double left = 90;
  const double top = 90;
  const double n = static_cast<double>(labels.size());
  Svg svg(left + cell * n + 90, top + cell * n + 20);
  svg.text(0.5 * (left + cell * n), 22, title, "middle", 14);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    svg.text(left - 6, top + cell * (static_cast<double>(i) + 0.65), labels[i], "end", 10);
    svg.text(left + cell * (static_cast<double>(i) + 0.5), top - 8, labels[i], "middle", 9);
    for (std::size_t j = 0; j < labels.size(); ++j) {
      svg.rect(left + cell * static_cast<double>(j), top + cell * static_cast<double>(i), cell, cell,
               diverging_color(values(i, j)));
    }
  }
  // Color bar over [-1, 1].
  const double bx = left + cell * n + 30;
  for (int s = 0; s < 20; ++s) {
    const double v = 1.0 - 2.0 * s / 19.0;
    svg.rect(bx, top + s * cell * n / 20.0, 16, cell * n / 20.0 + 0.5, diverging_color(v));
  }
  svg.text(bx + 20, top + 8, "1", "start", 10);
  svg.text(bx + 20, top + cell * n, "-1", "start", 10);
  return svg.str();
}

}  // namespace mixedabc::plot
