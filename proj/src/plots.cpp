#include "jointssl/plots.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <spdlog/fmt/fmt.h>

#include "jointssl/errors.hpp"

namespace jointssl::plots {

namespace {

constexpr double kWidth = 720;
constexpr double kHeight = 440;
constexpr double kLeft = 70;
constexpr double kRight = 170;
constexpr double kTop = 40;
constexpr double kBottom = 60;

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                          "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

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

const char* colour(std::size_t i) { return kPalette[i % std::size(kPalette)]; }

struct Frame {
  double x0, x1, y0, y1;
  double px(double x) const { return kLeft + (x - x0) / (x1 - x0) * (kWidth - kLeft - kRight); }
  double py(double y) const { return kHeight - kBottom - (y - y0) / (y1 - y0) * (kHeight - kTop - kBottom); }
};

std::pair<double, double> padded(double lo, double hi) {
  if (!(lo < hi)) {
    const double d = std::max(std::abs(lo) * 0.1, 0.05);
    return {lo - d, hi + d};
  }
  const double d = (hi - lo) * 0.08;
  return {lo - d, hi + d};
}

std::string header(const Axes& a) {
  std::string s = fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{0}\" height=\"{1}\" viewBox=\"0 0 {0} {1}\" "
      "font-family=\"sans-serif\" font-size=\"12\">\n"
      "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n",
      kWidth, kHeight);
  s += fmt::format("<text x=\"{}\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">{}</text>\n",
                   (kLeft + kWidth - kRight) / 2, escape(a.title));
  s += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n", (kLeft + kWidth - kRight) / 2,
                   kHeight - 18, escape(a.x_label));
  s += fmt::format("<text x=\"18\" y=\"{0}\" text-anchor=\"middle\" transform=\"rotate(-90 18 {0})\">{1}</text>\n",
                   (kTop + kHeight - kBottom) / 2, escape(a.y_label));
  return s;
}

std::string y_axis(const Frame& f) {
  std::string s = fmt::format("<line x1=\"{0}\" y1=\"{1}\" x2=\"{0}\" y2=\"{2}\" stroke=\"black\"/>\n", kLeft,
                              kTop, kHeight - kBottom);
  s += fmt::format("<line x1=\"{0}\" y1=\"{1}\" x2=\"{2}\" y2=\"{1}\" stroke=\"black\"/>\n", kLeft,
                   kHeight - kBottom, kWidth - kRight);
  for (int i = 0; i <= 5; ++i) {
    const double v = f.y0 + (f.y1 - f.y0) * i / 5.0;
    const double y = f.py(v);
    s += fmt::format("<line x1=\"{}\" y1=\"{:.1f}\" x2=\"{}\" y2=\"{:.1f}\" stroke=\"#ddd\"/>\n", kLeft, y,
                     kWidth - kRight, y);
    s += fmt::format("<text x=\"{}\" y=\"{:.1f}\" text-anchor=\"end\">{:.3g}</text>\n", kLeft - 6, y + 4, v);
  }
  return s;
}

std::string legend(const std::vector<std::string>& names) {
  std::string s;
  for (std::size_t i = 0; i < names.size(); ++i) {
    const double y = kTop + 10 + 20.0 * i;
    s += fmt::format("<rect x=\"{}\" y=\"{}\" width=\"14\" height=\"10\" fill=\"{}\"/>\n", kWidth - kRight + 15,
                     y - 9, colour(i));
    s += fmt::format("<text x=\"{}\" y=\"{}\">{}</text>\n", kWidth - kRight + 35, y, escape(names[i]));
  }
  return s;
}

}  // namespace

std::string line_chart(const Axes& axes, const std::vector<Series>& series) {
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  for (const auto& s : series) {
    for (auto [x, y] : s.points) {
      x0 = std::min(x0, x), x1 = std::max(x1, x);
      y0 = std::min(y0, y), y1 = std::max(y1, y);
    }
  }
  if (!std::isfinite(x0)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  const auto [px0, px1] = padded(x0, x1);
  const auto [py0, py1] = axes.y_range ? *axes.y_range : padded(y0, y1);
  const Frame f{px0, px1, py0, py1};

  std::string out = header(axes) + y_axis(f);
  std::vector<double> xs;
  for (const auto& s : series) {
    for (auto p : s.points) xs.push_back(p.first);
  }
  std::sort(xs.begin(), xs.end());
  xs.erase(std::unique(xs.begin(), xs.end()), xs.end());
  for (double x : xs) {
    out += fmt::format("<text x=\"{:.1f}\" y=\"{}\" text-anchor=\"middle\">{:.3g}</text>\n", f.px(x),
                       kHeight - kBottom + 18, x);
  }
  std::vector<std::string> names;
  for (std::size_t i = 0; i < series.size(); ++i) {
    names.push_back(series[i].name);
    std::string pts;
    for (auto [x, y] : series[i].points) pts += fmt::format("{:.1f},{:.1f} ", f.px(x), f.py(y));
    out += fmt::format("<polyline points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"2\"/>\n", pts,
                       colour(i));
    for (auto [x, y] : series[i].points) {
      out += fmt::format("<circle cx=\"{:.1f}\" cy=\"{:.1f}\" r=\"3.5\" fill=\"{}\"/>\n", f.px(x), f.py(y),
                         colour(i));
    }
  }
  out += legend(names);
  out += "</svg>\n";
  return out;
}

std::string bar_chart(const Axes& axes, const std::vector<std::string>& series_names,
                      const std::vector<BarGroup>& groups) {
  double y1 = 0.0;
  for (const auto& g : groups) {
    for (double v : g.values) y1 = std::max(y1, v);
  }
  const auto [py0, py1] = axes.y_range ? *axes.y_range : std::pair<double, double>{0.0, y1 > 0 ? y1 * 1.1 : 1.0};
  const Frame f{0.0, static_cast<double>(std::max<std::size_t>(groups.size(), 1)), py0, py1};
  std::string out = header(axes) + y_axis(f);
  const double slot = (kWidth - kLeft - kRight) / std::max<std::size_t>(groups.size(), 1);
  const double bar = slot * 0.8 / std::max<std::size_t>(series_names.size(), 1);
  for (std::size_t g = 0; g < groups.size(); ++g) {
    const double gx = kLeft + slot * g + slot * 0.1;
    for (std::size_t s = 0; s < groups[g].values.size(); ++s) {
      const double v = groups[g].values[s];
      const double top = f.py(std::max(v, py0));
      out += fmt::format("<rect x=\"{:.1f}\" y=\"{:.1f}\" width=\"{:.1f}\" height=\"{:.1f}\" fill=\"{}\"/>\n",
                         gx + bar * s, top, bar * 0.9, std::max(0.0, f.py(py0) - top), colour(s));
    }
    out += fmt::format("<text x=\"{:.1f}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n", kLeft + slot * (g + 0.5),
                       kHeight - kBottom + 18, escape(groups[g].label));
  }
  out += legend(series_names);
  out += "</svg>\n";
  return out;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::error_code ec;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary);
    out << text;
    if (!out) throw IoError("cannot write " + tmp.string());
  }
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

}  // namespace jointssl::plots
