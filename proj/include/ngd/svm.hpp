#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Core>

namespace ngd {

/// exp(-gamma * |a - b|^2)
template <typename DerivedA, typename DerivedB>
double rbf_kernel(const Eigen::MatrixBase<DerivedA>& a, const Eigen::MatrixBase<DerivedB>& b, double gamma) {
  return std::exp(-gamma * (a - b).squaredNorm());
}

/// Gram matrix over the rows of `x`.
Eigen::MatrixXd rbf_gram(const Eigen::MatrixXd& x, double gamma);

struct SvmParams {
  double gamma = 1.0;  ///< RBF kernel width parameter
  double cost = 1.0;   ///< soft-margin error cost C
  double tolerance = 1e-3;
  std::size_t max_iterations = 10'000'000;
};

/// Soft-margin C-SVC with a Gaussian kernel, trained by SMO with
/// second-order working-set selection. Labels are +1 / -1.
class SvmModel {
 public:
  SvmModel() = default;

  static SvmModel train(const Eigen::MatrixXd& x, std::span<const int> labels, const SvmParams& params);
  static SvmModel from_parts(Eigen::MatrixXd support_vectors, Eigen::VectorXd coefficients, double bias,
                             SvmParams params);

  /// Σ coef_i K(sv_i, x) + bias.
  double decision(const Eigen::Ref<const Eigen::VectorXd>& x) const;
  /// +1 when decision >= 0, else -1.
  int predict(const Eigen::Ref<const Eigen::VectorXd>& x) const { return decision(x) >= 0 ? 1 : -1; }

  const Eigen::MatrixXd& support_vectors() const { return support_vectors_; }
  /// alpha_i * y_i per support vector.
  const Eigen::VectorXd& coefficients() const { return coefficients_; }
  double bias() const { return bias_; }
  const SvmParams& params() const { return params_; }

  /// Dual variables of every training example (empty for models built from parts).
  const Eigen::VectorXd& alphas() const { return alphas_; }
  std::size_t iterations() const { return iterations_; }

 private:
  Eigen::MatrixXd support_vectors_;
  Eigen::VectorXd coefficients_;
  double bias_ = 0.0;
  SvmParams params_;
  Eigen::VectorXd alphas_;
  std::size_t iterations_ = 0;
};

}  // namespace ngd
