#include "pfode/mixture.hpp"

#include "pfode/special.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace pfode {

namespace {

constexpr double kWeightTolerance = 1e-12;

void validate_weights(const std::vector<double>& weights, const char* what) {
  if (weights.empty()) throw std::invalid_argument(std::string(what) + ": no components");
  double total = 0.0;
  for (double w : weights) {
    if (!(w > 0.0) || !std::isfinite(w)) {
      throw std::invalid_argument(std::string(what) + ": weights must be positive");
    }
    total += w;
  }
  if (std::abs(total - 1.0) > kWeightTolerance) {
    throw std::invalid_argument(std::string(what) + ": weights must sum to 1");
  }
}

void check_dim(const Vector& x, Eigen::Index n, const char* what) {
  if (x.size() != n) {
    throw std::invalid_argument(std::string(what) + ": expected dimension " + std::to_string(n) +
                                ", got " + std::to_string(x.size()));
  }
}

void check_time(double t) {
  if (!(t >= 0.0 && t <= 1.0)) throw std::invalid_argument("time must lie in [0, 1]");
}

double log_sum_exp(const std::vector<double>& terms) {
  const double top = *std::max_element(terms.begin(), terms.end());
  if (!std::isfinite(top)) return top;
  double acc = 0.0;
  for (double v : terms) acc += std::exp(v - top);
  return top + std::log(acc);
}

}  // namespace

GaussianMixture::GaussianMixture(std::vector<double> weights, std::vector<Vector> means,
                                 std::vector<Matrix> covariances)
    : weights_(std::move(weights)), means_(std::move(means)), covariances_(std::move(covariances)) {
  validate_weights(weights_, "GaussianMixture");
  if (means_.size() != weights_.size() || covariances_.size() != weights_.size()) {
    throw std::invalid_argument("GaussianMixture: component lists differ in length");
  }
  dim_ = means_.front().size();
  if (dim_ < 1) throw std::invalid_argument("GaussianMixture: dimension must be positive");

  for (std::size_t k = 0; k < weights_.size(); ++k) {
    const Matrix& cov = covariances_[k];
    check_dim(means_[k], dim_, "GaussianMixture mean");
    if (cov.rows() != dim_ || cov.cols() != dim_) {
      throw std::invalid_argument("GaussianMixture: covariance shape does not match dimension");
    }
    if (!means_[k].allFinite() || !cov.allFinite()) {
      throw std::invalid_argument("GaussianMixture: non-finite parameters");
    }
    if (!cov.isApprox(cov.transpose(), 1e-12)) {
      throw std::invalid_argument("GaussianMixture: covariance is not symmetric");
    }
    Eigen::LLT<Matrix> llt(cov);
    if (llt.info() != Eigen::Success) {
      throw std::invalid_argument("GaussianMixture: covariance " + std::to_string(k) +
                                  " is not positive definite");
    }
    Matrix lower = llt.matrixL();
    cholesky_.push_back(lower);
    log_det_.push_back(2.0 * lower.diagonal().array().log().sum());
    log_weights_.push_back(std::log(weights_[k]));
    const Matrix off = cov - Matrix(cov.diagonal().asDiagonal());
    diagonal_.push_back(off.isZero(0.0) ? 1 : 0);
  }
}

GaussianMixture GaussianMixture::standard_normal(Eigen::Index dim) {
  return GaussianMixture({1.0}, {Vector::Zero(dim)}, {Matrix::Identity(dim, dim)});
}

GaussianMixture GaussianMixture::isotropic(std::vector<double> weights, std::vector<Vector> means,
                                           const std::vector<double>& variances) {
  if (variances.size() != means.size() || means.empty()) {
    throw std::invalid_argument("GaussianMixture::isotropic: component lists differ in length");
  }
  std::vector<Matrix> covs;
  covs.reserve(variances.size());
  for (std::size_t k = 0; k < variances.size(); ++k) {
    const Eigen::Index n = means[k].size();
    covs.push_back(variances[k] * Matrix::Identity(n, n));
  }
  return GaussianMixture(std::move(weights), std::move(means), std::move(covs));
}

Vector GaussianMixture::mixture_mean() const {
  Vector m = Vector::Zero(dim_);
  for (std::size_t k = 0; k < size(); ++k) m += weights_[k] * means_[k];
  return m;
}

Matrix GaussianMixture::mixture_covariance() const {
  const Vector m = mixture_mean();
  Matrix c = Matrix::Zero(dim_, dim_);
  for (std::size_t k = 0; k < size(); ++k) {
    c += weights_[k] * (covariances_[k] + means_[k] * means_[k].transpose());
  }
  return c - m * m.transpose();
}

double log_density(const GaussianMixture& gm, const Vector& x) {
  check_dim(x, gm.dim(), "log_density");
  const double n = static_cast<double>(gm.dim());
  std::vector<double> terms(gm.size());
  for (std::size_t k = 0; k < gm.size(); ++k) {
    const Vector white =
        gm.cholesky_factor(k).triangularView<Eigen::Lower>().solve(x - gm.mean(k));
    terms[k] = gm.log_weight(k) - 0.5 * white.squaredNorm() - 0.5 * gm.log_det_covariance(k) -
               0.5 * n * kLogTwoPi;
  }
  return log_sum_exp(terms);
}

double density(const GaussianMixture& gm, const Vector& x) { return std::exp(log_density(gm, x)); }

Vector sample_one(const GaussianMixture& gm, Rng& rng) {
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  const double u = uniform(rng);
  std::size_t k = 0;
  double cumulative = gm.weights()[0];
  while (u >= cumulative && k + 1 < gm.size()) cumulative += gm.weights()[++k];
  const Vector xi = standard_normal_vector(rng, gm.dim());
  return gm.mean(k) + gm.cholesky_factor(k).triangularView<Eigen::Lower>() * xi;
}

std::vector<Vector> sample(const GaussianMixture& gm, Rng& rng, std::size_t count) {
  if (count < 1) throw std::invalid_argument("sample: count must be >= 1");
  std::vector<Vector> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(sample_one(gm, rng));
  return out;
}

TimeMarginal marginal_at_time(const GaussianMixture& gm, double t) {
  check_time(t);
  const double s = 1.0 - t;
  const Eigen::Index n = gm.dim();
  std::vector<Vector> means;
  std::vector<Matrix> covs;
  for (std::size_t k = 0; k < gm.size(); ++k) {
    means.push_back(s * gm.mean(k));
    covs.push_back(s * s * gm.covariance(k) + t * t * Matrix::Identity(n, n));
  }
  return TimeMarginal{t, GaussianMixture(gm.weights(), std::move(means), std::move(covs))};
}

// Per component k, with m_k = (1-t) mu_k and C_k = (1-t)^2 Sigma_k + t^2 I:
//   y_k = C_k^{-1} (x - m_k)
//   v_k = t y_k - mu_k - (1-t) Sigma_k y_k        (E[Z - X | X_t = x, component k])
//   A_k = C_k^{-1} (t I - (1-t) Sigma_k)          (d v_k / d x)
// v = sum_k r_k v_k and dv/dx = sum_k r_k A_k + sum_k r_k v_k (s_k - s_bar)^T with
// s_k = -y_k the component score and s_bar = sum_k r_k s_k.
FieldValue evaluate_field(const GaussianMixture& gm, const Vector& x, double t,
                          bool with_jacobian) {
  check_time(t);
  check_dim(x, gm.dim(), "velocity");
  const Eigen::Index n = gm.dim();
  const std::size_t K = gm.size();
  const double s = 1.0 - t;

  std::vector<double> log_terms(K);
  std::vector<Vector> ys(K);
  std::vector<Vector> vs(K);
  std::vector<Matrix> as(with_jacobian ? K : 0);

  for (std::size_t k = 0; k < K; ++k) {
    const Vector& mu = gm.mean(k);
    const Matrix& sigma = gm.covariance(k);
    const Vector diff = x - s * mu;
    double log_det_c = 0.0;
    if (gm.is_diagonal(k)) {
      const Vector c = (s * s) * sigma.diagonal().array() + t * t;
      ys[k] = diff.array() / c.array();
      log_det_c = c.array().log().sum();
      vs[k] = t * ys[k] - mu - s * (sigma.diagonal().array() * ys[k].array()).matrix();
      if (with_jacobian) {
        const Vector a = (t - s * sigma.diagonal().array()) / c.array();
        as[k] = a.asDiagonal();
      }
    } else {
      const Matrix c = (s * s) * sigma + (t * t) * Matrix::Identity(n, n);
      Eigen::LLT<Matrix> llt(c);
      if (llt.info() != Eigen::Success) {
        throw std::runtime_error("velocity: time-marginal covariance factorization failed");
      }
      ys[k] = llt.solve(diff);
      log_det_c = 2.0 * Matrix(llt.matrixL()).diagonal().array().log().sum();
      vs[k] = t * ys[k] - mu - s * (sigma * ys[k]);
      if (with_jacobian) {
        as[k] = llt.solve(t * Matrix::Identity(n, n) - s * sigma);
      }
    }
    log_terms[k] = gm.log_weight(k) - 0.5 * diff.dot(ys[k]) - 0.5 * log_det_c;
  }

  const double top = *std::max_element(log_terms.begin(), log_terms.end());
  std::vector<double> r(K);
  double total = 0.0;
  for (std::size_t k = 0; k < K; ++k) {
    r[k] = std::exp(log_terms[k] - top);
    total += r[k];
  }
  for (double& rk : r) rk /= total;

  FieldValue out;
  out.velocity = Vector::Zero(n);
  for (std::size_t k = 0; k < K; ++k) out.velocity += r[k] * vs[k];

  if (with_jacobian) {
    Vector mean_y = Vector::Zero(n);
    for (std::size_t k = 0; k < K; ++k) mean_y += r[k] * ys[k];
    out.jacobian = Matrix::Zero(n, n);
    for (std::size_t k = 0; k < K; ++k) {
      out.jacobian += r[k] * as[k];
      if (K > 1) out.jacobian -= r[k] * vs[k] * (ys[k] - mean_y).transpose();
    }
  }
  return out;
}

Vector velocity(const GaussianMixture& gm, const Vector& x, double t) {
  return evaluate_field(gm, x, t, false).velocity;
}

Matrix velocity_jacobian(const GaussianMixture& gm, const Vector& x, double t) {
  return evaluate_field(gm, x, t, true).jacobian;
}

double divergence(const GaussianMixture& gm, const Vector& x, double t) {
  return velocity_jacobian(gm, x, t).trace();
}

NeighborMixture::NeighborMixture(std::vector<double> weights, std::vector<Vector> centers,
                                 std::vector<double> half_widths,
                                 std::vector<double> kernel_widths, double required_min_distance)
    : weights_(std::move(weights)),
      centers_(std::move(centers)),
      half_widths_(std::move(half_widths)),
      kernel_widths_(std::move(kernel_widths)) {
  validate_weights(weights_, "NeighborMixture");
  const std::size_t m = weights_.size();
  if (centers_.size() != m || half_widths_.size() != m || kernel_widths_.size() != m) {
    throw std::invalid_argument("NeighborMixture: component lists differ in length");
  }
  dim_ = centers_.front().size();
  if (dim_ < 1) throw std::invalid_argument("NeighborMixture: dimension must be positive");
  for (std::size_t i = 0; i < m; ++i) {
    check_dim(centers_[i], dim_, "NeighborMixture center");
    if (!(half_widths_[i] > 0.0)) {
      throw std::invalid_argument("NeighborMixture: cube half-widths must be positive");
    }
    if (!(kernel_widths_[i] > 0.0)) {
      throw std::invalid_argument("NeighborMixture: kernel widths must be positive");
    }
  }
  min_distance_ = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = i + 1; j < m; ++j) {
      const Vector gap = (centers_[i] - centers_[j]).cwiseAbs();
      if (gap.maxCoeff() < half_widths_[i] + half_widths_[j]) {
        throw std::invalid_argument("NeighborMixture: cubes " + std::to_string(i) + " and " +
                                    std::to_string(j) + " overlap");
      }
      min_distance_ = std::min(min_distance_, gap.norm());
    }
  }
  if (min_distance_ < required_min_distance) {
    throw std::invalid_argument("NeighborMixture: center distance below required minimum");
  }
  normalized_min_distance_ = min_distance_ / std::sqrt(static_cast<double>(dim_));
}

double neighbor_log_density(const NeighborMixture& nm, const Vector& x) {
  check_dim(x, nm.dim(), "neighbor_density");
  std::vector<double> terms(nm.size());
  for (std::size_t i = 0; i < nm.size(); ++i) {
    const double h = nm.half_width(i);
    const double w = nm.kernel_width(i);
    double acc = std::log(nm.weights()[i]);
    for (Eigen::Index d = 0; d < nm.dim(); ++d) {
      const double offset = x[d] - nm.center(i)[d];
      acc += log_normal_cdf_difference((offset + h) / w, (offset - h) / w) - std::log(2.0 * h);
    }
    terms[i] = acc;
  }
  return log_sum_exp(terms);
}

double neighbor_density(const NeighborMixture& nm, const Vector& x) {
  return std::exp(neighbor_log_density(nm, x));
}

double component_mass_inside_cube(const NeighborMixture& nm, std::size_t i) {
  if (i >= nm.size()) throw std::out_of_range("component_mass_inside_cube: bad index");
  const double per_axis = std::erf(nm.half_width(i) / (nm.kernel_width(i) * std::sqrt(2.0)));
  return std::pow(per_axis, static_cast<double>(nm.dim()));
}

GaussianMixture gaussian_surrogate(const NeighborMixture& nm) {
  std::vector<Vector> means;
  std::vector<double> variances;
  for (std::size_t i = 0; i < nm.size(); ++i) {
    means.push_back(nm.center(i));
    variances.push_back(nm.kernel_width(i) * nm.kernel_width(i));
  }
  return GaussianMixture::isotropic(nm.weights(), std::move(means), variances);
}

}  // namespace pfode
