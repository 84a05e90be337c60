#include "spline.hpp"

#include <algorithm>
#include <cmath>

#include "parallel.hpp"
#include "problem.hpp"

namespace vhj {

void quantile_range(std::vector<double> v, double clip, double& lo, double& hi) {
  std::size_t n = v.size();
  std::size_t a = static_cast<std::size_t>(clip * (n - 1)), b = static_cast<std::size_t>((1 - clip) * (n - 1));
  std::nth_element(v.begin(), v.begin() + a, v.end());
  lo = v[a];
  std::nth_element(v.begin(), v.begin() + b, v.end());
  hi = v[b];
  if (!(hi - lo > 1e-9 * (1 + std::abs(lo)))) {
    double c = 0.5 * (lo + hi);
    lo = c - 1e-3;
    hi = c + 1e-3;
  }
}

void TensorSpline::build(const std::vector<double>& xs, const std::vector<double>& is, const std::vector<char>* mask,
                         double smoothing) {
  const int nx = ax.size(), ni = ai.size(), P = nx * ni;
  const std::size_t n = xs.size();
  std::size_t nc = chunk_count(n);
  std::vector<Eigen::MatrixXd> part(nc);
  std::vector<double> cnt(nc, 0.0);
  parallel_chunks(n, [&](std::size_t c, std::size_t lo, std::size_t hi) {
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(P, P);
    double wx[4], wi[4];
    for (std::size_t p = lo; p < hi; ++p) {
      if (mask && !(*mask)[p]) continue;
      int sx = ax.eval(xs[p], wx), si = ai.eval(is[p], wi);
      for (int a = 0; a < 4; ++a)
        for (int b = 0; b < 4; ++b) {
          int r = (sx + a) * ni + si + b;
          double wr = wx[a] * wi[b];
          for (int a2 = 0; a2 < 4; ++a2)
            for (int b2 = 0; b2 < 4; ++b2) A(r, (sx + a2) * ni + si + b2) += wr * wx[a2] * wi[b2];
        }
      cnt[c] += 1;
    }
    part[c] = std::move(A);
  });
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(P, P);
  double N = 0;
  for (std::size_t c = 0; c < nc; ++c) {
    A += part[c];
    N += cnt[c];
  }
  const double sc = smoothing * N;
  const double w[3] = {1, -2, 1};
  if (sc > 0) {
    for (int a = 0; a < nx; ++a)
      for (int j = 0; j + 2 < ni; ++j)
        for (int u = 0; u < 3; ++u)
          for (int v = 0; v < 3; ++v) A(a * ni + j + u, a * ni + j + v) += sc * w[u] * w[v];
    for (int j = 0; j < ni; ++j)
      for (int a = 0; a + 2 < nx; ++a)
        for (int u = 0; u < 3; ++u)
          for (int v = 0; v < 3; ++v) A((a + u) * ni + j, (a + v) * ni + j) += sc * w[u] * w[v];
  }
  A.diagonal().array() += 1e-10 * A.trace() / P + 1e-300;
  fac_.compute(A);
  ok_ = fac_.info() == Eigen::Success;
  if (!ok_) throw NumericalError("spline normal matrix factorization failed");
}

Eigen::VectorXd TensorSpline::fit(const std::vector<double>& xs, const std::vector<double>& is,
                                  const std::vector<double>& v, const std::vector<char>* mask) const {
  const int ni = ai.size(), P = size();
  const std::size_t n = xs.size();
  std::size_t nc = chunk_count(n);
  std::vector<Eigen::VectorXd> part(nc);
  parallel_chunks(n, [&](std::size_t c, std::size_t lo, std::size_t hi) {
    Eigen::VectorXd r = Eigen::VectorXd::Zero(P);
    double wx[4], wi[4];
    for (std::size_t p = lo; p < hi; ++p) {
      if (mask && !(*mask)[p]) continue;
      int sx = ax.eval(xs[p], wx), si = ai.eval(is[p], wi);
      for (int a = 0; a < 4; ++a)
        for (int b = 0; b < 4; ++b) r[(sx + a) * ni + si + b] += wx[a] * wi[b] * v[p];
    }
    part[c] = std::move(r);
  });
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(P);
  for (auto& r : part) rhs += r;
  return fac_.solve(rhs);
}

double TensorSpline::eval(const Eigen::VectorXd& c, double x, double i) const {
  const int ni = ai.size();
  double wx[4], wi[4];
  int sx = ax.eval(x, wx), si = ai.eval(i, wi);
  double v = 0;
  for (int a = 0; a < 4; ++a)
    for (int b = 0; b < 4; ++b) v += c[(sx + a) * ni + si + b] * wx[a] * wi[b];
  return v;
}

void TensorSpline::row(const Eigen::VectorXd& c, double x, double* q) const {
  const int ni = ai.size();
  double wx[4];
  int sx = ax.eval(x, wx);
  for (int j = 0; j < ni; ++j)
    q[j] = c[sx * ni + j] * wx[0] + c[(sx + 1) * ni + j] * wx[1] + c[(sx + 2) * ni + j] * wx[2] +
           c[(sx + 3) * ni + j] * wx[3];
}

}  // namespace vhj
