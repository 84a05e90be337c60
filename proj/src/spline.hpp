#pragma once
#include <algorithm>
#include <vector>

#include <Eigen/Dense>

namespace vhj {

// Uniform cubic B-splines on [lo, hi] with M intervals (M + 3 functions).
// Arguments outside the interval are clamped, so the fit extends as a constant.
struct SplineAxis {
  double lo = 0, hi = 1;
  int M = 8;
  int size() const { return M + 3; }
  int eval(double v, double* w) const {
    double u = (std::min(std::max(v, lo), hi) - lo) / (hi - lo) * M;
    int s = std::min(static_cast<int>(u), M - 1);
    double t = u - s, t2 = t * t, t3 = t2 * t, m = 1 - t;
    w[0] = m * m * m / 6.0;
    w[1] = (3 * t3 - 6 * t2 + 4) / 6.0;
    w[2] = (-3 * t3 + 3 * t2 + 3 * t + 1) / 6.0;
    w[3] = t3 / 6.0;
    return s;
  }
};

// Penalized least-squares tensor spline in (x, i). Coefficient index is ix * ni + ii.
class TensorSpline {
 public:
  SplineAxis ax, ai;

  // xs, is: sample points; mask may be null. smoothing scales the
  // second-difference penalty per sample.
  void build(const std::vector<double>& xs, const std::vector<double>& is, const std::vector<char>* mask,
             double smoothing);
  Eigen::VectorXd fit(const std::vector<double>& xs, const std::vector<double>& is, const std::vector<double>& v,
                      const std::vector<char>* mask) const;
  int size() const { return ax.size() * ai.size(); }
  double eval(const Eigen::VectorXd& c, double x, double i) const;
  // Collapse the x direction at a fixed x: q has ai.size() entries.
  void row(const Eigen::VectorXd& c, double x, double* q) const;
  double eval_row(const double* q, double i) const {
    double w[4];
    int s = ai.eval(i, w);
    return q[s] * w[0] + q[s + 1] * w[1] + q[s + 2] * w[2] + q[s + 3] * w[3];
  }
  bool ok() const { return ok_; }

 private:
  Eigen::LDLT<Eigen::MatrixXd> fac_;
  bool ok_ = false;
};

// Interior quantile range of a sample.
void quantile_range(std::vector<double> v, double clip, double& lo, double& hi);

}  // namespace vhj
