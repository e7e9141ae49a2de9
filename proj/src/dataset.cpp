#include "jointssl/dataset.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>
#include <sstream>

#include "jointssl/errors.hpp"
#include "jointssl/random.hpp"

namespace jointssl {

LabelSpace deepweeds_label_space() {
  return {{"Chinee apple", "Lantana", "Parkinsonia", "Parthenium", "Prickly acacia", "Rubber vine",
           "Siam weed", "Snake weed", "Negative"}};
}

std::vector<int> Dataset::labels() const {
  std::vector<int> out;
  out.reserve(samples.size());
  for (const auto& s : samples) {
    if (!s.label) throw ContractError("sample " + s.id + " has no label");
    out.push_back(*s.label);
  }
  return out;
}

std::vector<int> Dataset::class_counts() const {
  std::vector<int> counts(num_classes(), 0);
  for (const auto& s : samples) {
    if (s.label) ++counts.at(*s.label);
  }
  return counts;
}

std::map<std::string, std::size_t> Dataset::index() const {
  std::map<std::string, std::size_t> idx;
  for (std::size_t i = 0; i < samples.size(); ++i) idx.emplace(samples[i].id, i);
  return idx;
}

// ------------------------------------------------------------------ DeepWeeds

namespace {

std::string trim(std::string s) {
  const auto ws = " \t\r\n\"";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string::npos) return {};
  return s.substr(b, s.find_last_not_of(ws) - b + 1);
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) out.push_back(trim(field));
  return out;
}

std::optional<int> parse_int(const std::string& s) {
  int v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

ImageTensor decode_image(const std::filesystem::path& path, int resolution) {
  cv::Mat bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (bgr.empty()) throw IngestionError("cannot read image " + path.string());
  if (bgr.rows != resolution || bgr.cols != resolution) {
    cv::Mat resized;
    cv::resize(bgr, resized, cv::Size(resolution, resolution), 0, 0, cv::INTER_AREA);
    bgr = resized;
  }
  ImageTensor img(resolution, resolution, 3);
  for (int y = 0; y < resolution; ++y) {
    const auto* row = bgr.ptr<cv::Vec3b>(y);
    for (int x = 0; x < resolution; ++x) {
      double* px = img.pixel(y, x);
      px[0] = row[x][2] / 255.0;
      px[1] = row[x][1] / 255.0;
      px[2] = row[x][0] / 255.0;
    }
  }
  return img;
}

}  // namespace

Dataset load_deepweeds(const std::filesystem::path& image_dir, const std::filesystem::path& labels_file,
                       const DeepWeedsOptions& options) {
  if (options.resolution < 1) throw ConfigError("resolution must be positive");
  if (options.num_classes < 2) throw ConfigError("need at least 2 classes");
  std::ifstream in(labels_file);
  if (!in) throw IngestionError("cannot open labels file " + labels_file.string());

  Dataset ds;
  ds.provenance = Provenance::deepweeds;
  ds.label_space = options.label_space;
  ds.label_space.classes.resize(options.num_classes);
  for (int c = 0; c < options.num_classes; ++c) {
    if (ds.label_space.classes[c].empty()) ds.label_space.classes[c] = "class_" + std::to_string(c);
  }

  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto fields = split_csv_line(line);
    if (fields.size() < 2) {
      throw SchemaError(labels_file.string() + ":" + std::to_string(line_no) +
                        ": expected filename,label[,species]");
    }
    const auto label = parse_int(fields[1]);
    if (!label) {
      if (line_no == 1) continue;  // header row
      throw SchemaError(labels_file.string() + ":" + std::to_string(line_no) + ": label '" +
                        fields[1] + "' is not an integer");
    }
    if (*label < 0 || *label >= options.num_classes) {
      throw SchemaError(labels_file.string() + ":" + std::to_string(line_no) + ": label " +
                        std::to_string(*label) + " outside [0, " + std::to_string(options.num_classes) +
                        ")");
    }
    if (fields.size() >= 3 && !fields[2].empty()) ds.label_space.classes[*label] = fields[2];
    Sample s;
    s.id = fields[0];
    s.label = *label;
    s.image = decode_image(image_dir / fields[0], options.resolution);
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

// ------------------------------------------------------------------ synthetic

namespace {

struct Vec2 {
  double x;
  double y;
};

double length(Vec2 p) { return std::hypot(p.x, p.y); }

double box(Vec2 p, double bx, double by) {
  const double qx = std::abs(p.x) - bx;
  const double qy = std::abs(p.y) - by;
  return std::hypot(std::max(qx, 0.0), std::max(qy, 0.0)) + std::min(std::max(qx, qy), 0.0);
}

double disk_at(Vec2 p, double cx, double cy, double r) { return length({p.x - cx, p.y - cy}) - r; }

double triangle(Vec2 p) {
  // equilateral, circumradius ~1
  const double k = std::sqrt(3.0);
  p.y += 0.25;
  p.x = std::abs(p.x) - 0.866;
  p.y = p.y + 0.866 / k;
  if (p.x + k * p.y > 0.0) p = {(p.x - k * p.y) / 2.0, (-k * p.x - p.y) / 2.0};
  p.x -= std::clamp(p.x, -1.732, 0.0);
  return -length(p) * (p.y < 0.0 ? -1.0 : 1.0);
}

// Signed distance (negative inside) of shape `kind` at unit scale.
double shape_sdf(int kind, Vec2 p) {
  switch (kind) {
    case 0: return length(p) - 0.9;                                       // disk
    case 1: return box(p, 0.75, 0.75);                                     // square
    case 2: return triangle(p);                                            // triangle
    case 3: return std::min(box(p, 0.95, 0.28), box(p, 0.28, 0.95));       // plus
    case 4: return std::abs(length(p) - 0.7) - 0.22;                       // ring
    case 5: return box(p, 1.0, 0.25);                                      // bar
    case 6: {                                                              // star
      const double a = std::atan2(p.y, p.x);
      return length(p) - (0.6 + 0.35 * std::cos(5.0 * a));
    }
    case 7: return std::max(box(p, 0.85, 0.85), -box(p, 0.5, 0.5));        // square frame
    case 8: return std::min(disk_at(p, -0.55, 0.0, 0.38), disk_at(p, 0.55, 0.0, 0.38));
    case 9: return std::max(length({p.x, p.y + 0.4}) - 0.95, -(p.y + 0.4));  // half disk
    case 10: return std::min(box({p.x + 0.45, p.y}, 0.25, 0.9), box({p.x, p.y - 0.65}, 0.7, 0.25));
    case 11: {                                                             // three dots
      double d = 1e9;
      for (int i = 0; i < 3; ++i) {
        const double a = std::numbers::pi / 2 + i * 2.0 * std::numbers::pi / 3.0;
        d = std::min(d, disk_at(p, 0.6 * std::cos(a), 0.6 * std::sin(a), 0.32));
      }
      return d;
    }
    default: return 1e9;
  }
}

std::array<double, 3> hsv_to_rgb(double h, double s, double v) {
  const double c = v * s;
  const double hp = std::fmod(h, 1.0) * 6.0;
  const double x = c * (1.0 - std::abs(std::fmod(hp, 2.0) - 1.0));
  std::array<double, 3> rgb{};
  switch (static_cast<int>(hp)) {
    case 0: rgb = {c, x, 0}; break;
    case 1: rgb = {x, c, 0}; break;
    case 2: rgb = {0, c, x}; break;
    case 3: rgb = {0, x, c}; break;
    case 4: rgb = {x, 0, c}; break;
    default: rgb = {c, 0, x}; break;
  }
  const double m = v - c;
  for (double& ch : rgb) ch += m;
  return rgb;
}

ImageTensor render_sample(int kind, int num_classes, int res, Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  // background: earthy base colour plus a few low-frequency waves
  const auto base = hsv_to_rgb(0.08 + 0.25 * u(rng), 0.3 + 0.4 * u(rng), 0.2 + 0.2 * u(rng));
  struct Wave {
    double fx, fy, phase, amp;
  };
  std::array<Wave, 3> waves{};
  for (auto& w : waves) {
    w = {(u(rng) - 0.5) * 0.6, (u(rng) - 0.5) * 0.6, u(rng) * 2.0 * std::numbers::pi, 0.01 + 0.02 * u(rng)};
  }
  // foreground: hue centred on the class slot and jittered a quarter slot into
  // each neighbour, so colour alone does not identify the class
  constexpr double kHueSpread = 1.5;
  const double hue = (kind + 0.5 + kHueSpread * (u(rng) - 0.5)) / num_classes;
  const auto fg = hsv_to_rgb(hue + 1.0, 0.5 + 0.5 * u(rng), 0.8 + 0.2 * u(rng));
  const double radius = res * (0.25 + 0.1 * u(rng));
  const double cx = 0.5 * (res - 1) + (u(rng) - 0.5) * 0.3 * res;
  const double cy = 0.5 * (res - 1) + (u(rng) - 0.5) * 0.3 * res;
  const double angle = u(rng) * 2.0 * std::numbers::pi;
  const double ca = std::cos(angle);
  const double sa = std::sin(angle);
  std::normal_distribution<double> grain(0.0, 0.02);

  ImageTensor img(res, res, 3);
  for (int y = 0; y < res; ++y) {
    for (int x = 0; x < res; ++x) {
      double tex = 0.0;
      for (const auto& w : waves) tex += w.amp * std::sin(w.fx * x + w.fy * y + w.phase);
      const Vec2 d{(x - cx) / radius, (y - cy) / radius};
      const Vec2 p{ca * d.x + sa * d.y, -sa * d.x + ca * d.y};
      const double alpha = std::clamp(0.5 - shape_sdf(kind, p) * radius, 0.0, 1.0);
      double* px = img.pixel(y, x);
      for (int c = 0; c < 3; ++c) {
        const double bg = base[c] + tex + grain(rng);
        px[c] = std::clamp(alpha * fg[c] + (1.0 - alpha) * bg, 0.0, 1.0);
      }
    }
  }
  return img;
}

const char* kShapeNames[kSyntheticShapeCount] = {"disk", "square", "triangle", "plus",
                                                 "ring", "bar",    "star",     "frame",
                                                 "two_dots", "half_disk", "l_shape", "three_dots"};

}  // namespace

Dataset generate_synthetic(int n_per_class, int num_classes, int resolution, std::uint64_t seed) {
  if (resolution < 4 || resolution % 4 != 0) {
    throw ConfigError("synthetic resolution must be a positive multiple of 4 (patchify stride), got " +
                      std::to_string(resolution));
  }
  if (n_per_class < 1) throw ConfigError("n_per_class must be >= 1");
  if (num_classes < 2 || num_classes > kSyntheticShapeCount) {
    throw ConfigError("synthetic data supports 2.." + std::to_string(kSyntheticShapeCount) + " classes");
  }
  Dataset ds;
  ds.provenance = Provenance::synthetic;
  for (int c = 0; c < num_classes; ++c) ds.label_space.classes.emplace_back(kShapeNames[c]);
  ds.samples.reserve(static_cast<std::size_t>(n_per_class) * num_classes);
  for (int c = 0; c < num_classes; ++c) {
    for (int i = 0; i < n_per_class; ++i) {
      Rng rng = make_rng(seed, {static_cast<std::uint64_t>(c), static_cast<std::uint64_t>(i)});
      Sample s;
      s.id = "syn_" + std::to_string(c) + "_" + std::to_string(i);
      s.label = c;
      s.image = render_sample(c, num_classes, resolution, rng);
      ds.samples.push_back(std::move(s));
    }
  }
  return ds;
}

}  // namespace jointssl
