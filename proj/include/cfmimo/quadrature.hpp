#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <vector>

namespace cfmimo {

/// Gauss-Hermite rule for expectations under the standard normal:
/// E[f(Z)] ~= sum_i weights[i] * f(nodes[i]).
struct GaussHermiteRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};

/// Golub-Welsch on the Jacobi matrix of the probabilists' Hermite polynomials.
inline GaussHermiteRule make_gauss_hermite(int order) {
  Eigen::VectorXd diag = Eigen::VectorXd::Zero(order);
  Eigen::VectorXd sub(order > 1 ? order - 1 : 0);
  for (int i = 1; i < order; ++i) sub(i - 1) = std::sqrt(static_cast<double>(i));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es;
  es.computeFromTridiagonal(diag, sub, Eigen::ComputeEigenvectors);
  GaussHermiteRule r;
  r.nodes.resize(order);
  r.weights.resize(order);
  for (int i = 0; i < order; ++i) {
    r.nodes[i] = es.eigenvalues()(i);
    const double v0 = es.eigenvectors()(0, i);
    r.weights[i] = v0 * v0;
  }
  return r;
}

template <int Order>
const GaussHermiteRule& gauss_hermite() {
  static const GaussHermiteRule rule = make_gauss_hermite(Order);
  return rule;
}

}  // namespace cfmimo
