#include "ngd/svm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "ngd/error.hpp"

namespace ngd {

namespace {

constexpr double kTau = 1e-12;

}  // namespace

Eigen::MatrixXd rbf_gram(const Eigen::MatrixXd& x, double gamma) {
  const Eigen::Index n = x.rows();
  Eigen::MatrixXd k(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    k(i, i) = 1.0;
    for (Eigen::Index j = i + 1; j < n; ++j) k(i, j) = k(j, i) = rbf_kernel(x.row(i), x.row(j), gamma);
  }
  return k;
}

SvmModel SvmModel::from_parts(Eigen::MatrixXd support_vectors, Eigen::VectorXd coefficients, double bias,
                              SvmParams params) {
  if (support_vectors.rows() != coefficients.size()) throw Error("support vector / coefficient count mismatch");
  SvmModel m;
  m.support_vectors_ = std::move(support_vectors);
  m.coefficients_ = std::move(coefficients);
  m.bias_ = bias;
  m.params_ = params;
  return m;
}

SvmModel SvmModel::train(const Eigen::MatrixXd& x, std::span<const int> labels, const SvmParams& params) {
  const Eigen::Index n = x.rows();
  if (n == 0 || static_cast<Eigen::Index>(labels.size()) != n) throw Error("training set and labels disagree");
  if (!(params.cost > 0) || !(params.gamma > 0)) throw Error("SVM cost and gamma must be positive");
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const int l = labels[static_cast<std::size_t>(i)];
    if (l != 1 && l != -1) throw Error("SVM labels must be +1 or -1");
    y(i) = l;
  }

  SvmModel model;
  model.params_ = params;
  model.alphas_ = Eigen::VectorXd::Zero(n);
  model.support_vectors_.resize(0, x.cols());

  // One class only: the equality constraint pins every alpha at zero.
  if ((y.array() == y(0)).all()) {
    model.bias_ = y(0);
    return model;
  }

  const double c = params.cost;
  const Eigen::MatrixXd k = rbf_gram(x, params.gamma);
  const Eigen::MatrixXd q = (y * y.transpose()).cwiseProduct(k);
  Eigen::VectorXd& alpha = model.alphas_;
  Eigen::VectorXd grad = -Eigen::VectorXd::Ones(n);

  auto upper = [&](Eigen::Index t) { return alpha(t) >= c; };
  auto lower = [&](Eigen::Index t) { return alpha(t) <= 0; };

  std::size_t iter = 0;
  for (; iter < params.max_iterations; ++iter) {
    // i maximizes -y G over the indices that may move up.
    double gmax = -std::numeric_limits<double>::infinity();
    Eigen::Index i = -1;
    for (Eigen::Index t = 0; t < n; ++t) {
      if (y(t) > 0 ? !upper(t) : !lower(t)) {
        const double v = -y(t) * grad(t);
        if (v >= gmax) {
          gmax = v;
          i = t;
        }
      }
    }
    // j minimizes the second-order decrease among indices that may move down.
    double gmax2 = -std::numeric_limits<double>::infinity();
    double best = std::numeric_limits<double>::infinity();
    Eigen::Index j = -1;
    for (Eigen::Index t = 0; t < n; ++t) {
      if (y(t) > 0 ? lower(t) : upper(t)) continue;
      const double v = y(t) * grad(t);
      gmax2 = std::max(gmax2, v);
      if (i < 0) continue;
      const double diff = gmax + v;
      if (diff > 0) {
        double quad = q(i, i) + q(t, t) - 2.0 * y(i) * y(t) * q(i, t);
        if (quad <= 0) quad = kTau;
        const double obj = -(diff * diff) / quad;
        if (obj <= best) {
          best = obj;
          j = t;
        }
      }
    }
    if (i < 0 || j < 0 || gmax + gmax2 < params.tolerance) break;

    const double old_i = alpha(i), old_j = alpha(j);
    if (y(i) != y(j)) {
      double quad = q(i, i) + q(j, j) + 2.0 * q(i, j);
      if (quad <= 0) quad = kTau;
      const double delta = (-grad(i) - grad(j)) / quad;
      const double diff = alpha(i) - alpha(j);
      alpha(i) += delta;
      alpha(j) += delta;
      if (diff > 0) {
        if (alpha(j) < 0) {
          alpha(j) = 0;
          alpha(i) = diff;
        }
      } else if (alpha(i) < 0) {
        alpha(i) = 0;
        alpha(j) = -diff;
      }
      if (diff > 0) {
        if (alpha(i) > c) {
          alpha(i) = c;
          alpha(j) = c - diff;
        }
      } else if (alpha(j) > c) {
        alpha(j) = c;
        alpha(i) = c + diff;
      }
    } else {
      double quad = q(i, i) + q(j, j) - 2.0 * q(i, j);
      if (quad <= 0) quad = kTau;
      const double delta = (grad(i) - grad(j)) / quad;
      const double sum = alpha(i) + alpha(j);
      alpha(i) -= delta;
      alpha(j) += delta;
      if (sum > c) {
        if (alpha(i) > c) {
          alpha(i) = c;
          alpha(j) = sum - c;
        }
      } else if (alpha(j) < 0) {
        alpha(j) = 0;
        alpha(i) = sum;
      }
      if (sum > c) {
        if (alpha(j) > c) {
          alpha(j) = c;
          alpha(i) = sum - c;
        }
      } else if (alpha(i) < 0) {
        alpha(i) = 0;
        alpha(j) = sum;
      }
    }
    grad += q.col(i) * (alpha(i) - old_i) + q.col(j) * (alpha(j) - old_j);
  }
  model.iterations_ = iter;

  // Offset from the free variables, or the midpoint of the feasible interval.
  double ub = std::numeric_limits<double>::infinity();
  double lb = -std::numeric_limits<double>::infinity();
  double free_sum = 0;
  int free_count = 0;
  for (Eigen::Index t = 0; t < n; ++t) {
    const double yg = y(t) * grad(t);
    if (upper(t)) {
      if (y(t) < 0) ub = std::min(ub, yg); else lb = std::max(lb, yg);
    } else if (lower(t)) {
      if (y(t) > 0) ub = std::min(ub, yg); else lb = std::max(lb, yg);
    } else {
      ++free_count;
      free_sum += yg;
    }
  }
  const double rho = free_count > 0 ? free_sum / free_count : (ub + lb) / 2;
  model.bias_ = -rho;

  std::vector<Eigen::Index> sv;
  for (Eigen::Index t = 0; t < n; ++t)
    if (alpha(t) > 0) sv.push_back(t);
  model.support_vectors_.resize(static_cast<Eigen::Index>(sv.size()), x.cols());
  model.coefficients_.resize(static_cast<Eigen::Index>(sv.size()));
  for (std::size_t s = 0; s < sv.size(); ++s) {
    model.support_vectors_.row(static_cast<Eigen::Index>(s)) = x.row(sv[s]);
    model.coefficients_(static_cast<Eigen::Index>(s)) = alpha(sv[s]) * y(sv[s]);
  }
  return model;
}

double SvmModel::decision(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  double f = bias_;
  for (Eigen::Index s = 0; s < support_vectors_.rows(); ++s)
    f += coefficients_(s) * rbf_kernel(support_vectors_.row(s).transpose(), x, params_.gamma);
  return f;
}

}  // namespace ngd
