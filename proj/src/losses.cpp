#include "jointssl/losses.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "jointssl/errors.hpp"

namespace jointssl {

void LossWeights::validate() const {
  if (!(lambda_cr >= 0.0 && lambda_cr <= 1.0)) {
    throw ConfigError("lambda_cr must lie in [0, 1], got " + std::to_string(lambda_cr));
  }
  if (!(lambda_sim >= 0.0 && lambda_sim <= 1.0)) {
    throw ConfigError("lambda_sim must lie in [0, 1], got " + std::to_string(lambda_sim));
  }
}

ClassifierHead::ClassifierHead(int features, int classes) : dense_("head", features, classes) {}

void ClassifierHead::init(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  dense_.init(0.02, rng);
}

std::vector<double> ClassifierHead::logits(const Tensor& feature, nn::Dense::Cache& cache) const {
  Tensor out = dense_.forward(feature, cache);
  return std::move(out.data);
}

std::vector<double> ClassifierHead::probabilities(const Tensor& feature) const {
  nn::Dense::Cache cache;
  return softmax(logits(feature, cache));
}

Tensor ClassifierHead::backward(std::span<const double> d_logits, const nn::Dense::Cache& cache) {
  Tensor dy(1, 1, static_cast<int>(d_logits.size()));
  std::copy(d_logits.begin(), d_logits.end(), dy.data.begin());
  return dense_.backward(dy, cache);
}

std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> p(logits.size());
  if (logits.empty()) return p;
  const double mx = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(logits[i] - mx);
    sum += p[i];
  }
  for (double& v : p) v /= sum;
  return p;
}

double supervised_loss(int label, std::span<const double> probs) {
  if (label < 0 || label >= static_cast<int>(probs.size())) {
    throw ContractError("label " + std::to_string(label) + " outside the probability vector");
  }
  return -std::log(std::max(probs[label], kProbabilityFloor));
}

std::vector<double> supervised_loss_grad(int label, std::span<const double> probs) {
  std::vector<double> g(probs.begin(), probs.end());
  g[label] -= 1.0;
  return g;
}

namespace {

double squared_distance(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) throw ShapeError("consistency loss: " + a.shape_str() + " vs " + b.shape_str());
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a.data[i] - b.data[i];
    s += d * d;
  }
  return s;
}

double norm_scale(const Tensor& t, L2Normalization norm) {
  return norm == L2Normalization::per_element ? 1.0 / static_cast<double>(t.size()) : 1.0;
}

}  // namespace

double consistency_loss(const Tensor& x, const Tensor& x_rec, const Tensor& x_view,
                        const Tensor& x_view_rec, L2Normalization norm) {
  return 0.5 * (squared_distance(x, x_rec) * norm_scale(x, norm) +
                squared_distance(x_view, x_view_rec) * norm_scale(x_view, norm));
}

Tensor consistency_loss_grad(const Tensor& target, const Tensor& reconstruction, L2Normalization norm) {
  if (!target.same_shape(reconstruction)) {
    throw ShapeError("consistency loss: " + target.shape_str() + " vs " + reconstruction.shape_str());
  }
  // d/dr of (1/2) * s * ||t - r||^2 = s * (r - t)
  const double s = norm_scale(target, norm);
  Tensor g(target.h, target.w, target.c);
  for (std::size_t i = 0; i < g.size(); ++i) g.data[i] = s * (reconstruction.data[i] - target.data[i]);
  return g;
}

namespace {

struct CosineParts {
  double dot = 0.0;
  double nu = 0.0;
  double nv = 0.0;
};

CosineParts cosine_parts(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) throw ShapeError("cosine similarity: vector lengths differ");
  CosineParts p;
  for (std::size_t i = 0; i < u.size(); ++i) {
    p.dot += u[i] * v[i];
    p.nu += u[i] * u[i];
    p.nv += v[i] * v[i];
  }
  p.nu = std::sqrt(p.nu);
  p.nv = std::sqrt(p.nv);
  return p;
}

}  // namespace

double cosine_similarity(std::span<const double> u, std::span<const double> v) {
  const CosineParts p = cosine_parts(u, v);
  return p.dot / std::max(p.nu * p.nv, kCosineEpsilon);
}

double similarity_loss(std::span<const double> u, std::span<const double> v) {
  return 1.0 - cosine_similarity(u, v);
}

SimilarityGrad similarity_loss_grad(std::span<const double> u, std::span<const double> v) {
  const CosineParts p = cosine_parts(u, v);
  SimilarityGrad g{std::vector<double>(u.size()), std::vector<double>(v.size())};
  const double denom = p.nu * p.nv;
  if (denom <= kCosineEpsilon) {
    for (std::size_t i = 0; i < u.size(); ++i) {
      g.du[i] = -v[i] / kCosineEpsilon;
      g.dv[i] = -u[i] / kCosineEpsilon;
    }
    return g;
  }
  const double cos = p.dot / denom;
  for (std::size_t i = 0; i < u.size(); ++i) {
    g.du[i] = -(v[i] / denom - cos * u[i] / (p.nu * p.nu));
    g.dv[i] = -(u[i] / denom - cos * v[i] / (p.nv * p.nv));
  }
  return g;
}

double total_loss(const LossComponents& parts, const LossWeights& w) {
  if (!std::isfinite(parts.ce)) throw DivergenceError("non-finite l_CE: " + std::to_string(parts.ce));
  if (!std::isfinite(parts.cr)) throw DivergenceError("non-finite l_CR: " + std::to_string(parts.cr));
  if (!std::isfinite(parts.sim)) throw DivergenceError("non-finite l_Sim: " + std::to_string(parts.sim));
  return parts.ce + w.lambda_cr * parts.cr + w.lambda_sim * parts.sim;
}

}  // namespace jointssl
