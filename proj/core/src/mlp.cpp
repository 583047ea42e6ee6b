#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "models_internal.hpp"
#include "voxpipe/error.hpp"
#include "voxpipe/models.hpp"

namespace voxpipe::models {

namespace objective {

std::size_t MlpShape::parameter_count() const {
  std::size_t total = 0;
  for (std::size_t l = 1; l < sizes.size(); ++l) {
    total += static_cast<std::size_t>(sizes[l]) * static_cast<std::size_t>(sizes[l - 1] + 1);
  }
  return total;
}

Eigen::VectorXd pack(const std::vector<DenseLayer>& layers) {
  Eigen::Index total = 0;
  for (const auto& l : layers) total += l.weights.size() + l.bias.size();
  Eigen::VectorXd theta(total);
  Eigen::Index at = 0;
  for (const auto& l : layers) {
    for (Eigen::Index r = 0; r < l.weights.rows(); ++r) {
      for (Eigen::Index c = 0; c < l.weights.cols(); ++c) theta[at++] = l.weights(r, c);
    }
    theta.segment(at, l.bias.size()) = l.bias;
    at += l.bias.size();
  }
  return theta;
}

std::vector<DenseLayer> unpack(const Eigen::VectorXd& theta, const MlpShape& shape) {
  if (static_cast<std::size_t>(theta.size()) != shape.parameter_count()) {
    throw ShapeError("parameter vector has " + std::to_string(theta.size()) + " entries, shape needs " +
                     std::to_string(shape.parameter_count()));
  }
  std::vector<DenseLayer> layers;
  Eigen::Index at = 0;
  for (std::size_t l = 1; l < shape.sizes.size(); ++l) {
    const Eigen::Index out = shape.sizes[l];
    const Eigen::Index in = shape.sizes[l - 1];
    DenseLayer layer;
    layer.weights.resize(out, in);
    for (Eigen::Index r = 0; r < out; ++r) {
      for (Eigen::Index c = 0; c < in; ++c) layer.weights(r, c) = theta[at++];
    }
    layer.bias = theta.segment(at, out);
    at += out;
    layers.push_back(std::move(layer));
  }
  return layers;
}

double mlp(const Eigen::VectorXd& theta, const MlpShape& shape, Head head, const Problem& p, double l2,
           Eigen::VectorXd* grad) {
  const auto layers = unpack(theta, shape);
  const std::size_t depth = layers.size();
  std::vector<Eigen::MatrixXd> acts{p.x};  // inputs to each layer
  std::vector<Eigen::MatrixXd> pre;
  for (std::size_t l = 0; l < depth; ++l) {
    Eigen::MatrixXd z = acts.back() * layers[l].weights.transpose();
    z.rowwise() += layers[l].bias.transpose();
    pre.push_back(z);
    if (l + 1 < depth) acts.push_back(z.cwiseMax(0.0));
  }
  const Eigen::MatrixXd& out = pre.back();
  const auto n = out.rows();
  const double wsum = p.w.sum();
  Eigen::MatrixXd dz(n, out.cols());
  double loss = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    double li = 0.0;
    switch (head) {
      case Head::kSigmoid: {
        const double z = out(i, 0);
        const double y = p.y[i];
        li = std::max(z, 0.0) - y * z + std::log1p(std::exp(-std::abs(z)));
        dz(i, 0) = 1.0 / (1.0 + std::exp(-z)) - y;
        break;
      }
      case Head::kSoftmax: {
        const double m = out.row(i).maxCoeff();
        Eigen::RowVectorXd e = (out.row(i).array() - m).exp();
        const double s = e.sum();
        const auto yi = static_cast<Eigen::Index>(p.y[i]);
        li = std::log(s) + m - out(i, yi);
        dz.row(i) = e / s;
        dz(i, yi) -= 1.0;
        break;
      }
      case Head::kLinear:
      case Head::kAuto: {
        const double r = out(i, 0) - p.y[i];
        li = 0.5 * r * r;
        dz(i, 0) = r;
        break;
      }
    }
    loss += p.w[i] * li;
    dz.row(i) *= p.w[i] / wsum;
  }
  loss /= wsum;
  for (const auto& l : layers) loss += 0.5 * l2 * l.weights.squaredNorm();
  if (!grad) return loss;

  std::vector<DenseLayer> g(depth);
  for (std::size_t l = depth; l-- > 0;) {
    g[l].weights = dz.transpose() * acts[l] + l2 * layers[l].weights;
    g[l].bias = dz.colwise().sum().transpose();
    if (l > 0) {
      Eigen::MatrixXd da = dz * layers[l].weights;
      dz = (pre[l - 1].array() > 0).select(da, 0.0);
    }
  }
  *grad = pack(g);
  return loss;
}

}  // namespace objective

namespace {

Head resolve_head(const MlpArch& arch, const Dataset& data) {
  const std::size_t k = data.class_names.size();
  Head head = arch.head;
  if (head == Head::kAuto) head = !data.is_classification() ? Head::kLinear : (k == 2 ? Head::kSigmoid : Head::kSoftmax);
  if (data.is_classification() && head == Head::kLinear) {
    throw ParameterError("linear head cannot serve a classification dataset");
  }
  if (!data.is_classification() && head != Head::kLinear) {
    throw ParameterError(std::string(to_string(head)) + " head needs class labels");
  }
  if (head == Head::kSigmoid && k != 2) {
    throw ParameterError("sigmoid head needs exactly 2 classes, dataset has " + std::to_string(k));
  }
  return head;
}

}  // namespace

TrainedModel train_mlp(const Dataset& data, const MlpArch& arch, const Hyperparams& hp) {
  hp.validate();
  if (arch.hidden.empty()) throw ParameterError("MLP needs at least one hidden layer");
  for (int units : arch.hidden) {
    if (units < 1) throw ParameterError("hidden layer sizes must be positive, got " + std::to_string(units));
  }
  data.validate();
  if (data.size() == 0) throw DegenerateDataError("cannot train on an empty dataset");
  const Head head = resolve_head(arch, data);
  if (data.is_classification()) detail::require_classes(data);

  TrainedModel m;
  m.kind = ModelKind::kMlp;
  m.head = head;
  m.feature_labels = data.feature_labels;
  m.class_names = data.class_names;
  m.standardizer = Standardizer::fit(data.x);
  const Eigen::MatrixXd xs = m.standardizer.apply(data.x);
  const Eigen::VectorXd w = normalize_weights(data.effective_weights());
  Eigen::VectorXd ys = data.y;
  if (head == Head::kLinear) {
    m.target_mean = ys.mean();
    const double sd = std::sqrt((ys.array() - m.target_mean).square().mean());
    m.target_scale = sd > 1e-12 ? sd : 1.0;
    ys = (ys.array() - m.target_mean) / m.target_scale;
  }

  objective::MlpShape shape;
  shape.sizes.push_back(static_cast<int>(xs.cols()));
  shape.sizes.insert(shape.sizes.end(), arch.hidden.begin(), arch.hidden.end());
  shape.sizes.push_back(head == Head::kSoftmax ? static_cast<int>(data.class_names.size()) : 1);

  std::mt19937_64 rng(hp.seed);
  std::vector<DenseLayer> init;
  for (std::size_t l = 1; l < shape.sizes.size(); ++l) {
    const int in = shape.sizes[l - 1];
    const int out = shape.sizes[l];
    const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
    std::uniform_real_distribution<double> u(-limit, limit);
    DenseLayer layer{Eigen::MatrixXd(out, in), Eigen::VectorXd::Zero(out)};
    for (Eigen::Index r = 0; r < out; ++r) {
      for (Eigen::Index c = 0; c < in; ++c) layer.weights(r, c) = u(rng);
    }
    init.push_back(std::move(layer));
  }
  Eigen::VectorXd theta = objective::pack(init);

  const objective::Problem full{xs, ys, w};
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const auto batch = static_cast<std::size_t>(hp.batch_size);
  Eigen::VectorXd g;
  Eigen::MatrixXd bx;
  Eigen::VectorXd by, bw;
  for (int e = 0; e < hp.epochs; ++e) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t end = std::min(order.size(), start + batch);
      const auto m_rows = static_cast<Eigen::Index>(end - start);
      bx.resize(m_rows, xs.cols());
      by.resize(m_rows);
      bw.resize(m_rows);
      for (Eigen::Index i = 0; i < m_rows; ++i) {
        const auto r = static_cast<Eigen::Index>(order[start + static_cast<std::size_t>(i)]);
        bx.row(i) = xs.row(r);
        by[i] = ys[r];
        bw[i] = w[r];
      }
      if (!(bw.sum() > 0)) continue;
      objective::Problem part{bx, by, bw};
      objective::mlp(theta, shape, head, part, hp.l2, &g);
      theta -= hp.learning_rate * g;
    }
    m.loss_history.push_back(objective::mlp(theta, shape, head, full, hp.l2, nullptr));
  }
  m.layers = objective::unpack(theta, shape);
  return m;
}

}  // namespace voxpipe::models
