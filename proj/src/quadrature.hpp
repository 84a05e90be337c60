#pragma once
#include <cmath>
#include <vector>

#include <Eigen/Dense>

namespace vhj {

// Gauss-Hermite rule for the standard normal (weights sum to 1), Golub-Welsch.
inline void gauss_hermite(int m, std::vector<double>& z, std::vector<double>& w) {
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(m, m);
  for (int k = 1; k < m; ++k) J(k, k - 1) = J(k - 1, k) = std::sqrt(static_cast<double>(k));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J);
  z.resize(m);
  w.resize(m);
  for (int k = 0; k < m; ++k) {
    z[k] = es.eigenvalues()[k];
    double v = es.eigenvectors()(0, k);
    w[k] = v * v;
  }
  // symmetrize against rounding
  for (int k = 0; k < m / 2; ++k) {
    double zz = 0.5 * (z[m - 1 - k] - z[k]), ww = 0.5 * (w[k] + w[m - 1 - k]);
    z[k] = -zz; z[m - 1 - k] = zz;
    w[k] = w[m - 1 - k] = ww;
  }
  if (m % 2 == 1) z[m / 2] = 0.0;
}

}  // namespace vhj
