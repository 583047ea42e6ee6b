#include "voxpipe/models.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <set>
#include <sstream>

#include "models_internal.hpp"
#include "voxpipe/error.hpp"

namespace voxpipe::models {

std::string_view to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::kLogistic: return "logistic";
    case ModelKind::kLinearSvm: return "linear_svm";
    case ModelKind::kSvr: return "svr";
    case ModelKind::kRidge: return "ridge";
    case ModelKind::kMlp: return "mlp";
  }
  return "logistic";
}

ModelKind parse_model_kind(std::string_view text) {
  if (text == "logistic") return ModelKind::kLogistic;
  if (text == "linear_svm" || text == "svm") return ModelKind::kLinearSvm;
  if (text == "svr") return ModelKind::kSvr;
  if (text == "ridge") return ModelKind::kRidge;
  if (text == "mlp") return ModelKind::kMlp;
  throw ParameterError("unknown model kind '" + std::string(text) + "'");
}

std::string_view to_string(Head head) {
  switch (head) {
    case Head::kAuto: return "auto";
    case Head::kSigmoid: return "sigmoid";
    case Head::kSoftmax: return "softmax";
    case Head::kLinear: return "linear";
  }
  return "auto";
}

Head parse_head(std::string_view text) {
  if (text == "auto") return Head::kAuto;
  if (text == "sigmoid") return Head::kSigmoid;
  if (text == "softmax") return Head::kSoftmax;
  if (text == "linear") return Head::kLinear;
  throw ParameterError("unknown output head '" + std::string(text) + "'");
}

Task task_of(ModelKind kind) {
  switch (kind) {
    case ModelKind::kSvr:
    case ModelKind::kRidge: return Task::kRegression;
    default: return Task::kClassification;
  }
}

Eigen::VectorXd Dataset::effective_weights() const {
  if (weights.size() == 0) return Eigen::VectorXd::Ones(x.rows());
  return weights;
}

void Dataset::validate() const {
  const auto n = x.rows();
  if (y.size() != n) {
    throw ShapeError("dataset has " + std::to_string(n) + " rows but " + std::to_string(y.size()) + " targets");
  }
  if (weights.size() != 0 && weights.size() != n) {
    throw ShapeError("dataset has " + std::to_string(n) + " rows but " + std::to_string(weights.size()) +
                     " sample weights");
  }
  if (static_cast<std::size_t>(x.cols()) != feature_labels.size()) {
    throw ShapeError("dataset has " + std::to_string(x.cols()) + " columns but " +
                     std::to_string(feature_labels.size()) + " feature labels");
  }
  if (!x.allFinite()) throw DegenerateDataError("dataset contains non-finite feature values");
  if (!y.allFinite()) throw DegenerateDataError("dataset contains non-finite targets");
  if (is_classification()) {
    const double k = static_cast<double>(class_names.size());
    for (Eigen::Index i = 0; i < n; ++i) {
      if (y[i] < 0 || y[i] >= k || y[i] != std::floor(y[i])) {
        throw ShapeError("class id " + std::to_string(y[i]) + " outside 0.." + std::to_string(class_names.size() - 1));
      }
    }
  }
}

Dataset Dataset::classification(Eigen::MatrixXd x, std::span<const std::string> labels,
                                std::vector<std::string> feature_labels) {
  std::set<std::string> distinct(labels.begin(), labels.end());
  Dataset d;
  d.class_names.assign(distinct.begin(), distinct.end());
  d.y.resize(static_cast<Eigen::Index>(labels.size()));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    auto it = std::lower_bound(d.class_names.begin(), d.class_names.end(), labels[i]);
    d.y[static_cast<Eigen::Index>(i)] = static_cast<double>(it - d.class_names.begin());
  }
  d.x = std::move(x);
  d.feature_labels = std::move(feature_labels);
  d.validate();
  return d;
}

Dataset Dataset::regression(Eigen::MatrixXd x, Eigen::VectorXd y, std::vector<std::string> feature_labels) {
  Dataset d;
  d.x = std::move(x);
  d.y = std::move(y);
  d.feature_labels = std::move(feature_labels);
  d.validate();
  return d;
}

Dataset subset(const Dataset& data, std::span<const std::size_t> rows) {
  Dataset out;
  out.feature_labels = data.feature_labels;
  out.class_names = data.class_names;
  const auto m = static_cast<Eigen::Index>(rows.size());
  out.x.resize(m, data.x.cols());
  out.y.resize(m);
  if (data.weights.size() != 0) out.weights.resize(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    const auto r = static_cast<Eigen::Index>(rows[static_cast<std::size_t>(i)]);
    if (r >= data.x.rows()) throw BoundsError("row " + std::to_string(r) + " out of range");
    out.x.row(i) = data.x.row(r);
    out.y[i] = data.y[r];
    if (data.weights.size() != 0) out.weights[i] = data.weights[r];
  }
  return out;
}

Eigen::VectorXd normalize_weights(const Eigen::VectorXd& weights) {
  if (weights.size() == 0) throw DegenerateDataError("no sample weights");
  if ((weights.array() < 0).any() || !weights.allFinite()) {
    throw ParameterError("sample weights must be finite and nonnegative");
  }
  const double mean = weights.mean();
  if (!(mean > 0)) throw DegenerateDataError("sample weights are all zero");
  return weights / mean;
}

Standardizer Standardizer::fit(const Eigen::MatrixXd& x) {
  if (x.rows() < 1) throw DegenerateDataError("cannot fit a standardizer on zero rows");
  Standardizer s;
  s.mean = x.colwise().mean().transpose();
  s.scale.resize(x.cols());
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    const double var = (x.col(j).array() - s.mean[j]).square().mean();
    s.scale[j] = std::max(std::sqrt(var), kScaleFloor);
  }
  return s;
}

Eigen::MatrixXd Standardizer::apply(const Eigen::MatrixXd& x) const {
  if (x.cols() != mean.size()) {
    throw ShapeError("standardizer expects " + std::to_string(mean.size()) + " columns, got " +
                     std::to_string(x.cols()));
  }
  return (x.rowwise() - mean.transpose()).array().rowwise() / scale.transpose().array();
}

void Hyperparams::validate() const {
  if (!(learning_rate > 0) || !std::isfinite(learning_rate)) throw ParameterError("learning rate must be positive");
  if (epochs < 1) throw ParameterError("epochs must be at least 1");
  if (!(l2 >= 0)) throw ParameterError("L2 penalty must be nonnegative");
  if (!(svm_c > 0)) throw ParameterError("SVM C must be positive");
  if (!(svr_epsilon >= 0)) throw ParameterError("SVR epsilon must be nonnegative");
  if (batch_size < 1) throw ParameterError("batch size must be at least 1");
}

Hyperparams default_hyperparams(ModelKind kind) {
  Hyperparams hp;
  switch (kind) {
    case ModelKind::kLinearSvm:
    case ModelKind::kSvr:
      hp.learning_rate = 0.003;
      hp.epochs = 3000;
      break;
    case ModelKind::kRidge:
      hp.l2 = 1e-3;
      break;
    case ModelKind::kMlp:
      hp.learning_rate = 0.05;
      hp.epochs = 200;
      break;
    case ModelKind::kLogistic:
      break;
  }
  return hp;
}

Eigen::MatrixXd softmax_rows(const Eigen::MatrixXd& logits) {
  Eigen::MatrixXd p(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double m = logits.row(i).maxCoeff();
    Eigen::RowVectorXd e = (logits.row(i).array() - m).exp();
    p.row(i) = e / e.sum();
  }
  return p;
}

namespace detail {

Eigen::MatrixXd forward(const std::vector<DenseLayer>& layers, const Eigen::MatrixXd& xs) {
  Eigen::MatrixXd a = xs;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    Eigen::MatrixXd z = a * layers[l].weights.transpose();
    z.rowwise() += layers[l].bias.transpose();
    if (l + 1 < layers.size()) z = z.cwiseMax(0.0);
    a = std::move(z);
  }
  return a;
}

int present_class_count(const Dataset& data) {
  std::set<double> seen(data.y.data(), data.y.data() + data.y.size());
  return static_cast<int>(seen.size());
}

void require_classes(const Dataset& data) {
  if (!data.is_classification()) throw ParameterError("classifier needs class labels");
  if (present_class_count(data) < 2) {
    throw DegenerateDataError("classification needs at least 2 classes present, found " +
                              std::to_string(present_class_count(data)));
  }
}

}  // namespace detail

namespace objective {

namespace {

double penalty(const Eigen::Ref<const Eigen::MatrixXd>& w, double l2) { return 0.5 * l2 * w.squaredNorm(); }

}  // namespace

double softmax_cross_entropy(const Eigen::VectorXd& theta, int classes, const Problem& p, double l2,
                             Eigen::VectorXd* grad) {
  const auto n = p.x.rows();
  const auto d = p.x.cols();
  const Eigen::Index k = classes;
  Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> w(theta.data(), k, d);
  Eigen::Map<const Eigen::VectorXd> b(theta.data() + k * d, k);

  Eigen::MatrixXd z = p.x * w.transpose();
  z.rowwise() += b.transpose();
  const double wsum = p.w.sum();
  double loss = 0.0;
  Eigen::MatrixXd dz(n, k);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double m = z.row(i).maxCoeff();
    Eigen::RowVectorXd e = (z.row(i).array() - m).exp();
    const double s = e.sum();
    const auto yi = static_cast<Eigen::Index>(p.y[i]);
    loss += p.w[i] * (std::log(s) + m - z(i, yi));
    dz.row(i) = e / s;
    dz(i, yi) -= 1.0;
    dz.row(i) *= p.w[i] / wsum;
  }
  loss = loss / wsum + penalty(w, l2);
  if (grad) {
    grad->resize(theta.size());
    Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> gw(grad->data(), k, d);
    gw = dz.transpose() * p.x + l2 * w;
    grad->tail(k) = dz.colwise().sum().transpose();
  }
  return loss;
}

double hinge(const Eigen::VectorXd& theta, const Problem& p, double l2, Eigen::VectorXd* grad) {
  const auto d = p.x.cols();
  const auto w = theta.head(d);
  const double b = theta[d];
  const Eigen::VectorXd f = (p.x * w).array() + b;
  const double wsum = p.w.sum();
  double loss = 0.0;
  Eigen::VectorXd coef = Eigen::VectorXd::Zero(p.x.rows());
  for (Eigen::Index i = 0; i < p.x.rows(); ++i) {
    const double margin = p.y[i] * f[i];
    if (margin < 1.0) {
      loss += p.w[i] * (1.0 - margin);
      coef[i] = -p.y[i] * p.w[i] / wsum;
    }
  }
  loss = loss / wsum + penalty(w, l2);
  if (grad) {
    grad->resize(theta.size());
    grad->head(d) = p.x.transpose() * coef + l2 * w;
    (*grad)[d] = coef.sum();
  }
  return loss;
}

double epsilon_insensitive(const Eigen::VectorXd& theta, const Problem& p, double epsilon, double l2,
                           Eigen::VectorXd* grad) {
  const auto d = p.x.cols();
  const auto w = theta.head(d);
  const double b = theta[d];
  const Eigen::VectorXd r = (p.x * w).array() + b - p.y.array();
  const double wsum = p.w.sum();
  double loss = 0.0;
  Eigen::VectorXd coef = Eigen::VectorXd::Zero(p.x.rows());
  for (Eigen::Index i = 0; i < p.x.rows(); ++i) {
    const double excess = std::abs(r[i]) - epsilon;
    if (excess > 0) {
      loss += p.w[i] * excess;
      coef[i] = (r[i] > 0 ? 1.0 : -1.0) * p.w[i] / wsum;
    }
  }
  loss = loss / wsum + penalty(w, l2);
  if (grad) {
    grad->resize(theta.size());
    grad->head(d) = p.x.transpose() * coef + l2 * w;
    (*grad)[d] = coef.sum();
  }
  return loss;
}

}  // namespace objective

namespace {

using Objective = std::function<double(const Eigen::VectorXd&, Eigen::VectorXd*)>;

Eigen::VectorXd descend(Eigen::VectorXd theta, const Objective& f, const Hyperparams& hp,
                        std::vector<double>& history) {
  Eigen::VectorXd g;
  history.reserve(history.size() + static_cast<std::size_t>(hp.epochs));
  for (int e = 0; e < hp.epochs; ++e) {
    history.push_back(f(theta, &g));
    theta -= hp.learning_rate * g;
  }
  return theta;
}

TrainedModel base_model(ModelKind kind, const Dataset& data) {
  TrainedModel m;
  m.kind = kind;
  m.feature_labels = data.feature_labels;
  if (kind != ModelKind::kSvr && kind != ModelKind::kRidge) m.class_names = data.class_names;
  m.standardizer = Standardizer::fit(data.x);
  return m;
}

DenseLayer linear_layer(const Eigen::VectorXd& theta, Eigen::Index rows, Eigen::Index d) {
  DenseLayer layer;
  layer.weights =
      Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(theta.data(), rows, d);
  layer.bias = theta.segment(rows * d, rows);
  return layer;
}

void require_rows(const Dataset& data) {
  if (data.size() == 0) throw DegenerateDataError("cannot train on an empty dataset");
}

// Targets are standardized so the step size means the same thing for any unit.
std::pair<double, double> target_scaling(const Eigen::VectorXd& y) {
  const double mean = y.mean();
  const double sd = std::sqrt((y.array() - mean).square().mean());
  return {mean, sd > 1e-12 ? sd : 1.0};
}

}  // namespace

TrainedModel train_logistic(const Dataset& data, const Hyperparams& hp) {
  hp.validate();
  data.validate();
  require_rows(data);
  detail::require_classes(data);
  TrainedModel m = base_model(ModelKind::kLogistic, data);
  m.head = Head::kSoftmax;
  const Eigen::MatrixXd xs = m.standardizer.apply(data.x);
  const Eigen::VectorXd w = normalize_weights(data.effective_weights());
  const int k = static_cast<int>(data.class_names.size());
  const auto d = xs.cols();
  objective::Problem prob{xs, data.y, w};
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(k * d + k);
  theta = descend(
      theta, [&](const Eigen::VectorXd& t, Eigen::VectorXd* g) {
        return objective::softmax_cross_entropy(t, k, prob, hp.l2, g);
      },
      hp, m.loss_history);
  m.layers.push_back(linear_layer(theta, k, d));
  return m;
}

TrainedModel train_linear_svm(const Dataset& data, const Hyperparams& hp) {
  hp.validate();
  data.validate();
  require_rows(data);
  detail::require_classes(data);
  TrainedModel m = base_model(ModelKind::kLinearSvm, data);
  m.head = Head::kLinear;
  const Eigen::MatrixXd xs = m.standardizer.apply(data.x);
  const Eigen::VectorXd w = normalize_weights(data.effective_weights());
  const auto d = xs.cols();
  const auto k = static_cast<Eigen::Index>(data.class_names.size());
  const double lambda = 1.0 / (hp.svm_c * static_cast<double>(data.size()));
  // Two classes train a single scorer for class 1; more use one-vs-rest.
  const Eigen::Index scorers = k == 2 ? 1 : k;
  DenseLayer layer{Eigen::MatrixXd::Zero(scorers, d), Eigen::VectorXd::Zero(scorers)};
  std::vector<double> total(static_cast<std::size_t>(hp.epochs), 0.0);
  for (Eigen::Index c = 0; c < scorers; ++c) {
    const double positive = k == 2 ? 1.0 : static_cast<double>(c);
    Eigen::VectorXd ys = (data.y.array() == positive).select(Eigen::VectorXd::Ones(data.y.size()),
                                                             -Eigen::VectorXd::Ones(data.y.size()));
    objective::Problem prob{xs, ys, w};
    std::vector<double> history;
    Eigen::VectorXd theta = descend(
        Eigen::VectorXd::Zero(d + 1),
        [&](const Eigen::VectorXd& t, Eigen::VectorXd* g) { return objective::hinge(t, prob, lambda, g); }, hp,
        history);
    layer.weights.row(c) = theta.head(d).transpose();
    layer.bias[c] = theta[d];
    for (std::size_t e = 0; e < history.size(); ++e) total[e] += history[e];
  }
  m.loss_history = std::move(total);
  m.layers.push_back(std::move(layer));
  return m;
}

TrainedModel train_svr(const Dataset& data, const Hyperparams& hp) {
  hp.validate();
  data.validate();
  require_rows(data);
  TrainedModel m = base_model(ModelKind::kSvr, data);
  m.head = Head::kLinear;
  const Eigen::MatrixXd xs = m.standardizer.apply(data.x);
  const Eigen::VectorXd w = normalize_weights(data.effective_weights());
  std::tie(m.target_mean, m.target_scale) = target_scaling(data.y);
  const Eigen::VectorXd ys = (data.y.array() - m.target_mean) / m.target_scale;
  const auto d = xs.cols();
  const double lambda = 1.0 / (hp.svm_c * static_cast<double>(data.size()));
  const double eps = hp.svr_epsilon / m.target_scale;
  objective::Problem prob{xs, ys, w};
  Eigen::VectorXd theta = descend(
      Eigen::VectorXd::Zero(d + 1),
      [&](const Eigen::VectorXd& t, Eigen::VectorXd* g) {
        return objective::epsilon_insensitive(t, prob, eps, lambda, g);
      },
      hp, m.loss_history);
  m.layers.push_back(linear_layer(theta, 1, d));
  return m;
}

TrainedModel train_ridge(const Dataset& data, double lambda) {
  if (!(lambda >= 0) || !std::isfinite(lambda)) throw ParameterError("ridge lambda must be finite and nonnegative");
  data.validate();
  require_rows(data);
  TrainedModel m = base_model(ModelKind::kRidge, data);
  m.head = Head::kLinear;
  const Eigen::MatrixXd xs = m.standardizer.apply(data.x);
  const Eigen::VectorXd w = normalize_weights(data.effective_weights());
  const auto n = xs.rows();
  const auto d = xs.cols();
  Eigen::MatrixXd a(n, d + 1);
  a << xs, Eigen::VectorXd::Ones(n);
  const Eigen::MatrixXd aw = a.transpose() * w.asDiagonal();
  Eigen::MatrixXd lhs = aw * a;
  lhs.diagonal().head(d).array() += lambda;
  const Eigen::VectorXd rhs = aw * data.y;
  const Eigen::VectorXd beta = lhs.colPivHouseholderQr().solve(rhs);
  if (!beta.allFinite()) throw DegenerateDataError("ridge system has no finite solution");
  m.layers.push_back(DenseLayer{beta.head(d).transpose(), beta.tail(1)});
  const Eigen::VectorXd r = a * beta - data.y;
  m.loss_history.push_back((w.array() * r.array().square()).sum() + lambda * beta.head(d).squaredNorm());
  return m;
}

TrainedModel train(ModelKind kind, const Dataset& data, const Hyperparams& hp) {
  switch (kind) {
    case ModelKind::kLogistic: return train_logistic(data, hp);
    case ModelKind::kLinearSvm: return train_linear_svm(data, hp);
    case ModelKind::kSvr: return train_svr(data, hp);
    case ModelKind::kRidge: return train_ridge(data, hp.l2);
    case ModelKind::kMlp: return train_mlp(data, MlpArch{hp.hidden, Head::kAuto}, hp);
  }
  throw ParameterError("unknown model kind");
}

void check_feature_labels(const TrainedModel& model, std::span<const std::string> labels) {
  if (std::equal(labels.begin(), labels.end(), model.feature_labels.begin(), model.feature_labels.end())) return;
  const std::set<std::string> have(labels.begin(), labels.end());
  const std::set<std::string> want(model.feature_labels.begin(), model.feature_labels.end());
  std::vector<std::string> missing, extra;
  std::set_difference(want.begin(), want.end(), have.begin(), have.end(), std::back_inserter(missing));
  std::set_difference(have.begin(), have.end(), want.begin(), want.end(), std::back_inserter(extra));
  std::ostringstream msg;
  msg << "feature columns do not match the model";
  auto list = [&](const char* what, const std::vector<std::string>& v) {
    if (v.empty()) return;
    msg << "; " << what << ":";
    for (const auto& s : v) msg << " " << s;
  };
  list("missing", missing);
  list("extra", extra);
  if (missing.empty() && extra.empty()) msg << "; same columns in a different order";
  throw SchemaError(msg.str());
}

Prediction predict(const TrainedModel& model, const Eigen::MatrixXd& x, std::span<const std::string> feature_labels) {
  check_feature_labels(model, feature_labels);
  if (static_cast<std::size_t>(x.cols()) != model.feature_labels.size()) {
    throw ShapeError("input has " + std::to_string(x.cols()) + " columns, model expects " +
                     std::to_string(model.feature_labels.size()));
  }
  const Eigen::MatrixXd out = detail::forward(model.layers, model.standardizer.apply(x));
  Prediction p;
  const auto n = out.rows();
  if (model.task() == Task::kRegression) {
    p.values.resize(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) {
      p.values[static_cast<std::size_t>(i)] = model.target_mean + model.target_scale * out(i, 0);
    }
    return p;
  }
  p.class_ids.resize(static_cast<std::size_t>(n));
  if (out.cols() == 1) {
    // Single scorer: positive score means class 1.
    for (Eigen::Index i = 0; i < n; ++i) p.class_ids[static_cast<std::size_t>(i)] = out(i, 0) > 0 ? 1 : 0;
    if (model.head == Head::kSigmoid) {
      p.probabilities.resize(n, 2);
      for (Eigen::Index i = 0; i < n; ++i) {
        const double p1 = 1.0 / (1.0 + std::exp(-out(i, 0)));
        p.probabilities(i, 0) = 1.0 - p1;
        p.probabilities(i, 1) = p1;
      }
    }
  } else {
    for (Eigen::Index i = 0; i < n; ++i) {
      Eigen::Index best = 0;
      out.row(i).maxCoeff(&best);
      p.class_ids[static_cast<std::size_t>(i)] = static_cast<int>(best);
    }
    if (model.head == Head::kSoftmax) p.probabilities = softmax_rows(out);
  }
  p.labels.reserve(p.class_ids.size());
  for (int id : p.class_ids) p.labels.push_back(model.class_names.at(static_cast<std::size_t>(id)));
  return p;
}

Prediction predict(const TrainedModel& model, const Dataset& data) {
  return predict(model, data.x, data.feature_labels);
}

}  // namespace voxpipe::models
