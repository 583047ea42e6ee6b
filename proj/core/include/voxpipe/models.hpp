#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace voxpipe::models {

enum class ModelKind { kLogistic, kLinearSvm, kSvr, kRidge, kMlp };
enum class Task { kClassification, kRegression };
enum class Head { kAuto, kSigmoid, kSoftmax, kLinear };

std::string_view to_string(ModelKind kind);
ModelKind parse_model_kind(std::string_view text);
std::string_view to_string(Head head);
Head parse_head(std::string_view text);
// MLP serves both tasks; reported as classification here.
Task task_of(ModelKind kind);

// Rows are samples. For classification y holds class ids indexing
// class_names; for regression it holds the targets and class_names is empty.
struct Dataset {
  Eigen::MatrixXd x;
  Eigen::VectorXd y;
  Eigen::VectorXd weights;  // empty means all ones
  std::vector<std::string> feature_labels;
  std::vector<std::string> class_names;

  std::size_t size() const { return static_cast<std::size_t>(x.rows()); }
  std::size_t dims() const { return static_cast<std::size_t>(x.cols()); }
  bool is_classification() const { return !class_names.empty(); }
  Eigen::VectorXd effective_weights() const;
  void validate() const;

  // Class names are the sorted distinct labels.
  static Dataset classification(Eigen::MatrixXd x, std::span<const std::string> labels,
                                std::vector<std::string> feature_labels);
  static Dataset regression(Eigen::MatrixXd x, Eigen::VectorXd y, std::vector<std::string> feature_labels);
};

Dataset subset(const Dataset& data, std::span<const std::size_t> rows);

// Rescales to mean 1. Throws on negative or all-zero weights.
Eigen::VectorXd normalize_weights(const Eigen::VectorXd& weights);

struct Standardizer {
  Eigen::VectorXd mean;
  Eigen::VectorXd scale;  // population std, floored at kScaleFloor

  static constexpr double kScaleFloor = 1e-8;
  static Standardizer fit(const Eigen::MatrixXd& x);
  Eigen::MatrixXd apply(const Eigen::MatrixXd& x) const;

  bool operator==(const Standardizer& o) const { return mean == o.mean && scale == o.scale; }
};

struct Hyperparams {
  double learning_rate = 0.1;
  int epochs = 300;
  double l2 = 1e-4;           // logistic and MLP
  double svm_c = 1.0;         // SVM/SVR: penalty 1 / (C n) on the weight norm
  double svr_epsilon = 0.1;   // in target units
  std::vector<int> hidden = {32};
  int batch_size = 32;
  std::uint64_t seed = 0;

  void validate() const;
};

// Starting points per kind. The hinge and epsilon-insensitive losses are
// minimized with a fixed step, which settles within a band proportional to
// the step, so those kinds get a small step and more epochs.
Hyperparams default_hyperparams(ModelKind kind);

struct MlpArch {
  std::vector<int> hidden;
  Head head = Head::kAuto;  // sigmoid for 2 classes, softmax above, linear for regression
};

struct DenseLayer {
  Eigen::MatrixXd weights;  // outputs x inputs
  Eigen::VectorXd bias;

  bool operator==(const DenseLayer& o) const { return weights == o.weights && bias == o.bias; }
};

struct TrainedModel {
  ModelKind kind = ModelKind::kLogistic;
  Head head = Head::kSoftmax;
  Standardizer standardizer;
  std::vector<std::string> feature_labels;
  std::vector<std::string> class_names;
  double target_mean = 0.0;   // regression outputs are target_mean + target_scale * f(x)
  double target_scale = 1.0;
  std::vector<DenseLayer> layers;  // linear kinds carry exactly one
  std::vector<double> loss_history;

  Task task() const { return class_names.empty() ? Task::kRegression : Task::kClassification; }
  bool operator==(const TrainedModel&) const = default;
};

struct Prediction {
  std::vector<int> class_ids;
  std::vector<std::string> labels;
  Eigen::MatrixXd probabilities;  // n x classes, for probabilistic heads
  std::vector<double> values;     // regression
};

// Columns must match the model's feature labels exactly, order included.
void check_feature_labels(const TrainedModel& model, std::span<const std::string> labels);
Prediction predict(const TrainedModel& model, const Eigen::MatrixXd& x,
                   std::span<const std::string> feature_labels);
Prediction predict(const TrainedModel& model, const Dataset& data);

Eigen::MatrixXd softmax_rows(const Eigen::MatrixXd& logits);

TrainedModel train_logistic(const Dataset& data, const Hyperparams& hp);
TrainedModel train_linear_svm(const Dataset& data, const Hyperparams& hp);
TrainedModel train_svr(const Dataset& data, const Hyperparams& hp);
TrainedModel train_ridge(const Dataset& data, double lambda);
TrainedModel train_mlp(const Dataset& data, const MlpArch& arch, const Hyperparams& hp);
// Dispatch by kind; ridge reads hp.l2 as lambda, MLP reads hp.hidden.
TrainedModel train(ModelKind kind, const Dataset& data, const Hyperparams& hp);

void save_model(const TrainedModel& model, const std::filesystem::path& path);
TrainedModel load_model(const std::filesystem::path& path);
std::string model_to_text(const TrainedModel& model);
TrainedModel model_from_text(std::string_view text, std::string_view source = "<model>");

inline constexpr int kModelFormatVersion = 1;

// Training objectives over a flat parameter vector, exposed so gradients can
// be checked against finite differences. Each returns the weighted mean loss
// plus the L2 term and writes the gradient when `grad` is non-null. Weights
// are used as given (callers normalize).
namespace objective {

struct Problem {
  const Eigen::MatrixXd& x;
  const Eigen::VectorXd& y;
  const Eigen::VectorXd& w;
};

// theta = [W (classes x d, row-major), b (classes)]; y holds class ids.
double softmax_cross_entropy(const Eigen::VectorXd& theta, int classes, const Problem& p, double l2,
                             Eigen::VectorXd* grad);
// theta = [w (d), b]; y in {-1, +1}.
double hinge(const Eigen::VectorXd& theta, const Problem& p, double l2, Eigen::VectorXd* grad);
// theta = [w (d), b].
double epsilon_insensitive(const Eigen::VectorXd& theta, const Problem& p, double epsilon, double l2,
                           Eigen::VectorXd* grad);

// Layer sizes from input to output, e.g. {2, 8, 2}.
struct MlpShape {
  std::vector<int> sizes;
  std::size_t parameter_count() const;
};
Eigen::VectorXd pack(const std::vector<DenseLayer>& layers);
std::vector<DenseLayer> unpack(const Eigen::VectorXd& theta, const MlpShape& shape);
// Sigmoid/softmax heads expect class ids in y; linear expects targets.
double mlp(const Eigen::VectorXd& theta, const MlpShape& shape, Head head, const Problem& p, double l2,
           Eigen::VectorXd* grad);

}  // namespace objective

}  // namespace voxpipe::models
