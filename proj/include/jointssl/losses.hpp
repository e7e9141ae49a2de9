#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "jointssl/nn.hpp"
#include "jointssl/tensor.hpp"

namespace jointssl {

/// Weights of the two unsupervised terms in the total loss, each in [0, 1].
struct LossWeights {
  double lambda_cr = 1.00;
  double lambda_sim = 0.90;

  void validate() const;
};

/// How the squared L2 reconstruction norm is scaled.
enum class L2Normalization {
  per_element,  // mean squared error; resolution independent
  raw_sum,      // plain squared norm
};

/// Dense layer from the encoder feature vector to C logits, then softmax.
class ClassifierHead {
 public:
  ClassifierHead() = default;
  ClassifierHead(int features, int classes);

  void init(std::uint64_t seed);
  int classes() const { return dense_.out_features(); }

  std::vector<double> logits(const Tensor& feature, nn::Dense::Cache& cache) const;
  std::vector<double> probabilities(const Tensor& feature) const;
  /// Backprop d loss / d logits; returns d loss / d feature.
  Tensor backward(std::span<const double> d_logits, const nn::Dense::Cache& cache);

  void collect(nn::ParamRefs& out) { dense_.collect(out); }

 private:
  nn::Dense dense_;
};

std::vector<double> softmax(std::span<const double> logits);

inline constexpr double kProbabilityFloor = 1e-12;
inline constexpr double kCosineEpsilon = 1e-8;

/// -log(max(probs[y], 1e-12)).
double supervised_loss(int label, std::span<const double> probs);
/// d CE / d logits for a softmax head: probs - onehot(y).
std::vector<double> supervised_loss_grad(int label, std::span<const double> probs);

/// (1/2)(||x - x_rec||^2 + ||x' - x'_rec||^2); each norm divided by the
/// element count in per_element mode.
double consistency_loss(const Tensor& x, const Tensor& x_rec, const Tensor& x_view,
                        const Tensor& x_view_rec,
                        L2Normalization norm = L2Normalization::per_element);
/// d loss / d reconstruction for one (target, reconstruction) pair of the
/// consistency loss.
Tensor consistency_loss_grad(const Tensor& target, const Tensor& reconstruction,
                             L2Normalization norm = L2Normalization::per_element);

/// u.v / max(|u| |v|, 1e-8).
double cosine_similarity(std::span<const double> u, std::span<const double> v);
/// 1 - cosine_similarity(u, v).
double similarity_loss(std::span<const double> u, std::span<const double> v);

struct SimilarityGrad {
  std::vector<double> du;
  std::vector<double> dv;
};
SimilarityGrad similarity_loss_grad(std::span<const double> u, std::span<const double> v);

struct LossComponents {
  double ce = 0.0;
  double cr = 0.0;
  double sim = 0.0;
};

/// l_CE + lambda_CR * l_CR + lambda_Sim * l_Sim. Throws DivergenceError naming
/// the offending component when any term is NaN or infinite.
double total_loss(const LossComponents& parts, const LossWeights& w);

}  // namespace jointssl
