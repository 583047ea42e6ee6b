#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>

#include "voxpipe/clustering.hpp"
#include "voxpipe/error.hpp"

namespace voxpipe::cluster {

namespace {

constexpr double kWeightFloor = 1e-10;

// n x k matrix of log(w_k) + log N(x_i | mu_k, diag var_k).
Eigen::MatrixXd joint_log_density(const GmmModel& m, const Eigen::MatrixXd& x) {
  const auto n = x.rows();
  const auto k = m.means.rows();
  const auto d = x.cols();
  const double wsum = m.weights.sum();
  Eigen::MatrixXd out(n, k);
  for (Eigen::Index c = 0; c < k; ++c) {
    const double log_norm = -0.5 * static_cast<double>(d) * std::log(2.0 * std::numbers::pi) -
                            0.5 * m.variances.row(c).array().log().sum() + std::log(m.weights[c] / wsum);
    const Eigen::RowVectorXd inv = m.variances.row(c).cwiseInverse();
    for (Eigen::Index i = 0; i < n; ++i) {
      const double q = ((x.row(i) - m.means.row(c)).array().square() * inv.array()).sum();
      out(i, c) = log_norm - 0.5 * q;
    }
  }
  return out;
}

// Turns rows of log densities into posteriors; returns the total log-likelihood.
double normalize_rows(Eigen::MatrixXd& logp) {
  double ll = 0.0;
  for (Eigen::Index i = 0; i < logp.rows(); ++i) {
    const double mx = logp.row(i).maxCoeff();
    Eigen::RowVectorXd e = (logp.row(i).array() - mx).exp();
    const double s = e.sum();
    ll += mx + std::log(s);
    logp.row(i) = e / s;
  }
  return ll;
}

void check_model(const GmmModel& m, const Eigen::MatrixXd& x) {
  if (m.means.rows() < 1) throw ShapeError("mixture has no components");
  if (m.means.cols() != x.cols() || m.variances.rows() != m.means.rows() || m.variances.cols() != x.cols() ||
      m.weights.size() != m.means.rows()) {
    throw ShapeError("mixture of dimension " + std::to_string(m.means.cols()) + " applied to " +
                     std::to_string(x.cols()) + "-dim data");
  }
  if ((m.weights.array() <= 0).any()) throw ParameterError("mixing weights must be positive");
}

}  // namespace

GmmModel gmm_fit(const Eigen::MatrixXd& x_in, const GmmParams& params) {
  const auto n = x_in.rows();
  const auto d = x_in.cols();
  const Eigen::Index k = params.k;
  if (k < 1) throw ParameterError("GMM needs k >= 1");
  if (n < k) throw ParameterError("GMM with k=" + std::to_string(k) + " needs at least k rows, got " + std::to_string(n));
  if (params.max_iter < 1) throw ParameterError("max_iter must be positive");
  if (!(params.variance_floor > 0)) throw ParameterError("variance floor must be positive");
  if (!x_in.allFinite()) throw DegenerateDataError("GMM input contains non-finite values");

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
    for (Eigen::Index c = 0; c < d; ++c) {
      if (x_in(a, c) != x_in(b, c)) return x_in(a, c) < x_in(b, c);
    }
    return false;
  });
  Eigen::MatrixXd x(n, d);
  for (Eigen::Index i = 0; i < n; ++i) x.row(i) = x_in.row(order[static_cast<std::size_t>(i)]);

  GmmModel m;
  m.variance_floor = params.variance_floor;
  const Eigen::RowVectorXd global_mean = x.colwise().mean();
  const Eigen::RowVectorXd global_var =
      ((x.rowwise() - global_mean).array().square().colwise().sum() / static_cast<double>(n))
          .max(params.variance_floor)
          .matrix();

  // k-means++ seeding.
  std::mt19937_64 rng(params.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  m.means.resize(k, d);
  std::uniform_int_distribution<Eigen::Index> first(0, n - 1);
  m.means.row(0) = x.row(first(rng));
  Eigen::VectorXd d2 = (x.rowwise() - m.means.row(0)).rowwise().squaredNorm();
  for (Eigen::Index c = 1; c < k; ++c) {
    const double total = d2.sum();
    Eigen::Index pick = n - 1;
    if (total > 0) {
      double u = unit(rng) * total;
      for (Eigen::Index i = 0; i < n; ++i) {
        u -= d2[i];
        if (u < 0) {
          pick = i;
          break;
        }
      }
    } else {
      pick = first(rng);
    }
    m.means.row(c) = x.row(pick);
    d2 = d2.cwiseMin((x.rowwise() - m.means.row(c)).rowwise().squaredNorm());
  }
  m.variances = global_var.replicate(k, 1);
  m.weights = Eigen::VectorXd::Constant(k, 1.0 / static_cast<double>(k));

  std::vector<bool> variance_warned(static_cast<std::size_t>(k), false);
  for (int it = 0; it < params.max_iter; ++it) {
    Eigen::MatrixXd r = joint_log_density(m, x);
    const double ll = normalize_rows(r);
    m.log_likelihood.push_back(ll);
    m.iterations = it + 1;
    const std::size_t t = m.log_likelihood.size();
    if (t >= 2 && m.log_likelihood[t - 1] - m.log_likelihood[t - 2] < params.tol) {
      m.converged = true;
      break;
    }
    const Eigen::VectorXd nk = r.colwise().sum().transpose();
    for (Eigen::Index c = 0; c < k; ++c) {
      if (nk[c] < kWeightFloor * static_cast<double>(n)) {
        m.warnings.push_back("component " + std::to_string(c) + " collapsed at iteration " + std::to_string(it + 1) +
                             "; weight and variance re-floored");
        m.weights[c] = kWeightFloor;
        m.variances.row(c) = global_var;
        continue;
      }
      m.weights[c] = nk[c] / static_cast<double>(n);
      const Eigen::RowVectorXd mu = (r.col(c).transpose() * x) / nk[c];
      m.means.row(c) = mu;
      Eigen::RowVectorXd var = (r.col(c).transpose() * (x.rowwise() - mu).array().square().matrix()) / nk[c];
      bool floored = false;
      for (Eigen::Index j = 0; j < d; ++j) {
        if (var[j] < params.variance_floor) {
          var[j] = params.variance_floor;
          floored = true;
        }
      }
      if (floored && !variance_warned[static_cast<std::size_t>(c)]) {
        variance_warned[static_cast<std::size_t>(c)] = true;
        m.warnings.push_back("component " + std::to_string(c) + " variance hit the floor at iteration " +
                             std::to_string(it + 1));
      }
      m.variances.row(c) = var;
    }
    m.weights /= m.weights.sum();
  }
  return m;
}

GmmAssignment gmm_assign(const GmmModel& model, const Eigen::MatrixXd& x) {
  check_model(model, x);
  GmmAssignment a;
  a.responsibilities = joint_log_density(model, x);
  normalize_rows(a.responsibilities);
  a.labels.resize(static_cast<std::size_t>(x.rows()));
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    Eigen::Index best = 0;
    a.responsibilities.row(i).maxCoeff(&best);
    a.labels[static_cast<std::size_t>(i)] = static_cast<int>(best);
  }
  return a;
}

double gmm_log_likelihood(const GmmModel& model, const Eigen::MatrixXd& x) {
  check_model(model, x);
  Eigen::MatrixXd r = joint_log_density(model, x);
  return normalize_rows(r);
}

}  // namespace voxpipe::cluster
