#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "test_support.hpp"
#include "voxpipe/error.hpp"
#include "voxpipe/models.hpp"
#include "voxpipe/training.hpp"

using namespace voxpipe;
using namespace voxpipe::models;
namespace obj = voxpipe::models::objective;

namespace {

std::vector<std::string> names(int d) {
  std::vector<std::string> out;
  for (int i = 0; i < d; ++i) out.push_back("f" + std::to_string(i));
  return out;
}

Eigen::VectorXd random_weights(int n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.1, 2.0);
  Eigen::VectorXd w(n);
  for (int i = 0; i < n; ++i) w(i) = u(rng);
  return normalize_weights(w);
}

Eigen::VectorXd random_vector(int n, std::mt19937_64& rng, double scale = 1.0) {
  return test::random_matrix(n, 1, rng, scale).col(0);
}

Dataset blob_data(std::uint64_t seed = 7) {
  Eigen::MatrixXd x;
  std::vector<std::string> labels;
  test::blobs(200, {0, 0}, {5, 5}, 0.5, seed, x, labels);
  return Dataset::classification(x, labels, names(2));
}

Dataset linear_data(int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  Eigen::MatrixXd x(n, 1);
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) {
    x(i, 0) = u(rng);
    y(i) = 3 * x(i, 0) + 1;
  }
  return Dataset::regression(x, y, names(1));
}

double train_accuracy(const TrainedModel& m, const Dataset& d) {
  return evaluate(m, d).classification->accuracy;
}

}  // namespace

// Gradient checks over 20 random instances per objective.

TEST(Gradients, SoftmaxCrossEntropy) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(seed);
    const int classes = 2 + static_cast<int>(seed % 3);
    const Eigen::MatrixXd x = test::random_matrix(5, 3, rng);
    Eigen::VectorXd y(5);
    for (int i = 0; i < 5; ++i) y(i) = double(rng() % classes);
    const Eigen::VectorXd w = random_weights(5, rng);
    const obj::Problem p{x, y, w};
    const Eigen::VectorXd theta = random_vector(classes * 4, rng);
    const double err = test::gradient_error(
        [&](const Eigen::VectorXd& t, Eigen::VectorXd* g) { return obj::softmax_cross_entropy(t, classes, p, 0.3, g); },
        theta);
    EXPECT_LT(err, 1e-5) << "seed " << seed;
  }
}

TEST(Gradients, Hinge) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(100 + seed);
    const Eigen::MatrixXd x = test::random_matrix(8, 3, rng);
    Eigen::VectorXd y(8);
    for (int i = 0; i < 8; ++i) y(i) = rng() % 2 ? 1.0 : -1.0;
    const Eigen::VectorXd w = random_weights(8, rng);
    const obj::Problem p{x, y, w};
    const Eigen::VectorXd theta = random_vector(4, rng);
    const double err = test::gradient_error(
        [&](const Eigen::VectorXd& t, Eigen::VectorXd* g) { return obj::hinge(t, p, 0.2, g); }, theta);
    EXPECT_LT(err, 1e-4) << "seed " << seed;
  }
}

TEST(Gradients, EpsilonInsensitive) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(200 + seed);
    const Eigen::MatrixXd x = test::random_matrix(8, 3, rng);
    const Eigen::VectorXd y = random_vector(8, rng, 2.0);
    const Eigen::VectorXd w = random_weights(8, rng);
    const obj::Problem p{x, y, w};
    const Eigen::VectorXd theta = random_vector(4, rng);
    const double err = test::gradient_error(
        [&](const Eigen::VectorXd& t, Eigen::VectorXd* g) { return obj::epsilon_insensitive(t, p, 0.1, 0.2, g); },
        theta);
    EXPECT_LT(err, 1e-4) << "seed " << seed;
  }
}

TEST(Gradients, MlpHeads) {
  const std::pair<Head, int> heads[] = {{Head::kSoftmax, 2}, {Head::kSoftmax, 3}, {Head::kSigmoid, 1},
                                        {Head::kLinear, 1}};
  for (const auto& [head, outputs] : heads) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      std::mt19937_64 rng(300 + seed);
      const obj::MlpShape shape{{2, 8, outputs}};
      const Eigen::MatrixXd x = test::random_matrix(10, 2, rng);
      Eigen::VectorXd y(10);
      const int classes = head == Head::kSigmoid ? 2 : outputs;
      for (int i = 0; i < 10; ++i) y(i) = head == Head::kLinear ? x(i, 0) - x(i, 1) : double(rng() % classes);
      const Eigen::VectorXd w = random_weights(10, rng);
      const obj::Problem p{x, y, w};
      const Eigen::VectorXd theta = random_vector(static_cast<int>(shape.parameter_count()), rng, 0.7);
      const double err = test::gradient_error(
          [&](const Eigen::VectorXd& t, Eigen::VectorXd* g) { return obj::mlp(t, shape, head, p, 0.05, g); }, theta);
      EXPECT_LT(err, 1e-4) << to_string(head) << " seed " << seed;
    }
  }
}

TEST(Gradients, MlpTwoHiddenLayers) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(400 + seed);
    const obj::MlpShape shape{{3, 5, 4, 3}};
    const Eigen::MatrixXd x = test::random_matrix(10, 3, rng);
    Eigen::VectorXd y(10);
    for (int i = 0; i < 10; ++i) y(i) = double(rng() % 3);
    const Eigen::VectorXd w = random_weights(10, rng);
    const obj::Problem p{x, y, w};
    const Eigen::VectorXd theta = random_vector(static_cast<int>(shape.parameter_count()), rng, 0.7);
    const double err = test::gradient_error(
        [&](const Eigen::VectorXd& t, Eigen::VectorXd* g) { return obj::mlp(t, shape, Head::kSoftmax, p, 0.0, g); },
        theta);
    EXPECT_LT(err, 1e-4) << "seed " << seed;
  }
}

TEST(Objective, PackUnpackRoundTrip) {
  std::mt19937_64 rng(1);
  const obj::MlpShape shape{{3, 4, 2}};
  const Eigen::VectorXd theta = random_vector(static_cast<int>(shape.parameter_count()), rng);
  EXPECT_EQ(shape.parameter_count(), 3u * 4 + 4 + 4 * 2 + 2);
  EXPECT_EQ(obj::pack(obj::unpack(theta, shape)), theta);
}

TEST(Objective, HingeZeroForSeparatingMargin) {
  Eigen::MatrixXd x(4, 1);
  x << 2, 3, -2, -1.5;
  Eigen::VectorXd y(4);
  y << 1, 1, -1, -1;
  const Eigen::VectorXd w = Eigen::VectorXd::Ones(4);
  Eigen::VectorXd theta(2);
  theta << 1, 0;
  EXPECT_EQ(obj::hinge(theta, {x, y, w}, 0.0, nullptr), 0.0);
}

TEST(Standardizer, Basics) {
  std::mt19937_64 rng(3);
  Eigen::MatrixXd x = test::random_matrix(50, 4, rng, 3.0);
  x.col(2).setConstant(7.0);
  const Standardizer s = Standardizer::fit(x);
  const Eigen::MatrixXd z = s.apply(x);
  for (int j = 0; j < 4; ++j) EXPECT_LT(std::abs(z.col(j).mean()), 1e-9);
  for (int i = 0; i < 50; ++i) EXPECT_EQ(z(i, 2), 0.0);
  EXPECT_EQ(s.scale(2), Standardizer::kScaleFloor);
  EXPECT_EQ(s.apply(x), z);
}

TEST(Logistic, SeparableBlobs) {
  const Dataset d = blob_data();
  EXPECT_GE(train_accuracy(train_logistic(d, default_hyperparams(ModelKind::kLogistic)), d), 0.99);
}

TEST(Logistic, SingleClassIsDegenerate) {
  Eigen::MatrixXd x(3, 1);
  x << 1, 2, 3;
  const std::vector<std::string> labels{"a", "a", "a"};
  EXPECT_THROW(train_logistic(Dataset::classification(x, labels, names(1)), Hyperparams{}), DegenerateDataError);
}

TEST(Logistic, DoublingWeightsLeavesModelUnchanged) {
  Dataset d = blob_data(11);
  std::mt19937_64 rng(2);
  d.weights = random_weights(static_cast<int>(d.size()), rng);
  const TrainedModel a = train_logistic(d, Hyperparams{});
  d.weights *= 2.0;
  const TrainedModel b = train_logistic(d, Hyperparams{});
  EXPECT_LT((a.layers[0].weights - b.layers[0].weights).cwiseAbs().maxCoeff(), 1e-6);
  EXPECT_LT((a.layers[0].bias - b.layers[0].bias).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(Logistic, Multiclass) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> g(0, 0.4);
  Eigen::MatrixXd x(150, 2);
  std::vector<std::string> labels;
  const double cx[] = {0, 4, 0}, cy[] = {0, 0, 4};
  for (int i = 0; i < 150; ++i) {
    x(i, 0) = cx[i % 3] + g(rng);
    x(i, 1) = cy[i % 3] + g(rng);
    labels.push_back(std::string(1, char('a' + i % 3)));
  }
  const Dataset d = Dataset::classification(x, labels, names(2));
  const TrainedModel m = train_logistic(d, Hyperparams{});
  EXPECT_EQ(m.layers[0].weights.rows(), 3);
  EXPECT_GE(train_accuracy(m, d), 0.99);
  EXPECT_GE(train_accuracy(train_linear_svm(d, default_hyperparams(ModelKind::kLinearSvm)), d), 0.99);
}

TEST(Svm, SeparableBlobs) {
  const Dataset d = blob_data();
  EXPECT_GE(train_accuracy(train_linear_svm(d, default_hyperparams(ModelKind::kLinearSvm)), d), 0.99);
  EXPECT_GE(train_accuracy(train_linear_svm(d, Hyperparams{}), d), 0.99);
}

TEST(Svr, NoiselessLine) {
  const Dataset d = linear_data(100, 3);
  Hyperparams hp = default_hyperparams(ModelKind::kSvr);
  hp.svr_epsilon = 0.01;
  const TrainedModel m = train_svr(d, hp);
  EXPECT_LE(evaluate(m, d).regression->mae, 0.05);
}

TEST(Ridge, ExactlyDeterminedSystem) {
  Eigen::MatrixXd x(3, 2);
  x << 1, 0, 0, 1, 2, 3;
  Eigen::VectorXd y(3);
  y << 4, -1, 0.5;
  const Dataset d = Dataset::regression(x, y, names(2));
  const auto p = predict(train_ridge(d, 0.0), d);
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(p.values[i], y(i), 1e-9);
}

TEST(Ridge, HugePenaltyShrinksToMean) {
  const Dataset d = linear_data(50, 9);
  const TrainedModel m = train_ridge(d, 1e12);
  EXPECT_LT(m.layers[0].weights.cwiseAbs().maxCoeff(), 1e-6);
  for (double v : predict(m, d).values) EXPECT_NEAR(v, d.y.mean(), 1e-5);
}

TEST(Ridge, NegativePenaltyRejected) {
  EXPECT_THROW(train_ridge(linear_data(10, 1), -1.0), ParameterError);
}

// Cross-check: closed-form ridge and subgradient SVR agree on a noiseless line.
TEST(Ridge, AgreesWithSvr) {
  const Dataset d = linear_data(100, 21);
  Hyperparams hp = default_hyperparams(ModelKind::kSvr);
  hp.svr_epsilon = 0.01;
  const auto r = predict(train_ridge(d, 0.0), d).values;
  const auto s = predict(train_svr(d, hp), d).values;
  EXPECT_LE(regression_metrics(r, s).mae, 0.1);
}

// Property: small fixed steps on convex losses never raise the training loss.
TEST(Training, LossNonIncreasingAtSmallStep) {
  Hyperparams hp;
  hp.learning_rate = 1e-3;
  hp.epochs = 200;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Dataset c = blob_data(seed);
    const Dataset r = linear_data(60, seed);
    for (const auto& m : {train_logistic(c, hp), train_linear_svm(c, hp), train_svr(r, hp)}) {
      for (std::size_t i = 1; i < m.loss_history.size(); ++i) {
        ASSERT_LE(m.loss_history[i], m.loss_history[i - 1] + 1e-12) << to_string(m.kind) << " epoch " << i;
      }
    }
  }
}

// Property: rescaling all weights by a constant leaves predictions unchanged.
TEST(Training, WeightScaleInvariance) {
  std::mt19937_64 rng(8);
  Dataset c = blob_data(3);
  Dataset r = linear_data(60, 3);
  c.weights = random_weights(static_cast<int>(c.size()), rng);
  r.weights = random_weights(static_cast<int>(r.size()), rng);
  for (ModelKind kind : {ModelKind::kLogistic, ModelKind::kLinearSvm, ModelKind::kSvr, ModelKind::kRidge,
                         ModelKind::kMlp}) {
    Dataset d = (kind == ModelKind::kSvr || kind == ModelKind::kRidge) ? r : c;
    Hyperparams hp = default_hyperparams(kind);
    hp.epochs = std::min(hp.epochs, 100);
    const auto a = predict(train(kind, d, hp), d);
    d.weights *= 3.5;
    const auto b = predict(train(kind, d, hp), d);
    EXPECT_EQ(a.class_ids, b.class_ids) << to_string(kind);
    for (std::size_t i = 0; i < a.values.size(); ++i) EXPECT_NEAR(a.values[i], b.values[i], 1e-6);
  }
}

TEST(Mlp, LearnsXor) {
  Eigen::MatrixXd x(4, 2);
  x << 0, 0, 0, 1, 1, 0, 1, 1;
  const std::vector<std::string> labels{"0", "1", "1", "0"};
  const Dataset d = Dataset::classification(x, labels, names(2));
  Hyperparams hp;
  hp.learning_rate = 0.5;
  hp.epochs = 2000;
  hp.batch_size = 4;
  hp.l2 = 0.0;
  hp.seed = 1;
  const TrainedModel m = train_mlp(d, MlpArch{{8}, Head::kSigmoid}, hp);
  EXPECT_EQ(m.layers.back().weights.rows(), 1);
  EXPECT_EQ(train_accuracy(m, d), 1.0);
}

TEST(Mlp, RejectsBadArchitectures) {
  const Dataset d = blob_data();
  EXPECT_THROW(train_mlp(d, MlpArch{{}, Head::kAuto}, Hyperparams{}), ParameterError);
  EXPECT_THROW(train_mlp(d, MlpArch{{0}, Head::kAuto}, Hyperparams{}), ParameterError);
  EXPECT_THROW(train_mlp(d, MlpArch{{4}, Head::kLinear}, Hyperparams{}), ParameterError);
}

TEST(Mlp, SeedDeterministic) {
  const Dataset d = blob_data();
  Hyperparams hp;
  hp.epochs = 20;
  hp.seed = 4;
  EXPECT_EQ(train_mlp(d, MlpArch{{8}}, hp), train_mlp(d, MlpArch{{8}}, hp));
  hp.seed = 5;
  EXPECT_NE(train_mlp(d, MlpArch{{8}}, hp).layers[0].weights, train_mlp(d, MlpArch{{8}}, Hyperparams{}).layers[0].weights);
}

TEST(Mlp, Regression) {
  const Dataset d = linear_data(80, 2);
  Hyperparams hp;
  hp.epochs = 300;
  hp.learning_rate = 0.05;
  const TrainedModel m = train_mlp(d, MlpArch{{16}}, hp);
  EXPECT_EQ(m.task(), Task::kRegression);
  EXPECT_LE(evaluate(m, d).regression->mae, 0.3);
}

TEST(Predict, ColumnOrderIsEnforced) {
  const Dataset d = blob_data();
  const TrainedModel m = train_logistic(d, Hyperparams{});
  const std::vector<std::string> swapped{"f1", "f0"};
  try {
    predict(m, d.x, swapped);
    FAIL();
  } catch (const SchemaError& e) {
    EXPECT_NE(std::string(e.what()).find("order"), std::string::npos) << e.what();
  }
  const std::vector<std::string> other{"f0", "zz"};
  try {
    predict(m, d.x, other);
    FAIL();
  } catch (const SchemaError& e) {
    EXPECT_NE(std::string(e.what()).find("zz"), std::string::npos) << e.what();
    EXPECT_NE(std::string(e.what()).find("f1"), std::string::npos) << e.what();
  }
}

TEST(Predict, ProbabilitiesSumToOne) {
  const Dataset d = blob_data();
  for (const auto& m : {train_logistic(d, Hyperparams{}), train_mlp(d, MlpArch{{4}}, Hyperparams{})}) {
    const auto p = predict(m, d);
    ASSERT_EQ(p.probabilities.rows(), static_cast<Eigen::Index>(d.size()));
    for (Eigen::Index i = 0; i < p.probabilities.rows(); ++i) EXPECT_NEAR(p.probabilities.row(i).sum(), 1.0, 1e-9);
  }
}

TEST(Predict, SoftmaxShiftInvariance) {
  std::mt19937_64 rng(5);
  const Eigen::MatrixXd logits = test::random_matrix(20, 4, rng, 3.0);
  const Eigen::MatrixXd a = softmax_rows(logits);
  const Eigen::MatrixXd b = softmax_rows(logits.array() + 123.0);
  for (Eigen::Index i = 0; i < 20; ++i) {
    Eigen::Index ia, ib;
    a.row(i).maxCoeff(&ia);
    b.row(i).maxCoeff(&ib);
    EXPECT_EQ(ia, ib);
    EXPECT_NEAR(a.row(i).sum(), 1.0, 1e-12);
  }
  EXPECT_LT((a - b).cwiseAbs().maxCoeff(), 1e-12);
}

// Property: save/load round trips for every kind predict bit-identically.
TEST(Persistence, RoundTripPredictsIdentically) {
  test::TempDir dir;
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 20; ++trial) {
    const ModelKind kind = static_cast<ModelKind>(trial % 5);
    const bool reg = kind == ModelKind::kSvr || kind == ModelKind::kRidge;
    Dataset d = reg ? linear_data(30, trial) : blob_data(trial);
    Hyperparams hp = default_hyperparams(kind);
    hp.epochs = 10;
    hp.seed = trial;
    const TrainedModel m = train(kind, d, hp);
    const auto file = dir / ("m" + std::to_string(trial) + ".json");
    save_model(m, file);
    const TrainedModel back = load_model(file);
    EXPECT_EQ(back, m);
    const Eigen::MatrixXd probe = test::random_matrix(100, static_cast<int>(d.dims()), rng, 4.0);
    const auto a = predict(m, probe, d.feature_labels);
    const auto b = predict(back, probe, d.feature_labels);
    EXPECT_EQ(a.class_ids, b.class_ids);
    EXPECT_EQ(a.values, b.values);
    EXPECT_EQ(a.probabilities, b.probabilities);
  }
}

TEST(Persistence, VersionMismatchAndCorruption) {
  const TrainedModel m = train_logistic(blob_data(), Hyperparams{});
  std::string text = model_to_text(m);
  const auto pos = text.find("\"version\": 1");
  ASSERT_NE(pos, std::string::npos) << text.substr(0, 200);
  std::string bumped = text;
  bumped.replace(pos, 12, "\"version\": 2");
  EXPECT_THROW(model_from_text(bumped), FormatError);
  EXPECT_THROW(model_from_text(text.substr(0, text.size() / 2)), FormatError);
  EXPECT_THROW(model_from_text("{}"), FormatError);
  EXPECT_THROW(load_model("/nonexistent/model.json"), IoError);
}

TEST(Persistence, LoadedModelChecksLabels) {
  test::TempDir dir;
  const Dataset d = blob_data();
  save_model(train_logistic(d, Hyperparams{}), dir / "m.json");
  const TrainedModel m = load_model(dir / "m.json");
  EXPECT_EQ(m.feature_labels, d.feature_labels);
  const std::vector<std::string> wrong{"x", "y"};
  EXPECT_THROW(predict(m, d.x, wrong), SchemaError);
}

TEST(Hyperparams, Validation) {
  Hyperparams hp;
  hp.learning_rate = 0;
  EXPECT_THROW(hp.validate(), ParameterError);
  hp = Hyperparams{};
  hp.epochs = 0;
  EXPECT_THROW(hp.validate(), ParameterError);
  EXPECT_NO_THROW(default_hyperparams(ModelKind::kSvr).validate());
}
