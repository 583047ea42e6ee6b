#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "voxpipe/models.hpp"

namespace voxpipe::models {

// weight_i = 1 / count(bin(y_i)) with bins [k w, (k+1) w), rescaled to mean 1.
std::vector<double> sample_weights_by_bins(std::span<const double> y, double bin_width = 5.0);

// Equal-width bins over [min, max] combined with gender: "b<k>|<gender>".
std::vector<std::string> age_gender_strata(std::span<const double> ages, std::span<const std::string> genders,
                                           int n_bins = 5);
// Bin index per value for equal-width bins over [min, max]; the max lands in the last bin.
std::vector<int> equal_width_bins(std::span<const double> values, int n_bins);

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> holdout;
};

// Per group: shuffle, then round(ratio * size) half-up go to train.
// Singleton groups always train. Both lists come back sorted.
Split stratified_split(std::span<const std::string> groups, double ratio, std::uint64_t seed);

// k shuffled folds whose sizes differ by at most one; each fold sorted.
std::vector<std::vector<std::size_t>> kfold_indices(std::size_t n, int k, std::uint64_t seed);

std::vector<std::string> merge_labels(std::span<const std::string> labels,
                                      const std::map<std::string, std::string>& mapping);

struct ClassificationMetrics {
  double accuracy = 0.0;
  double macro_f1 = 0.0;
  std::vector<std::vector<long>> confusion;  // rows are true classes
};

struct RegressionMetrics {
  double mae = 0.0;
  double rmse = 0.0;
};

// Classes are 0..n_classes-1; n_classes <= 0 infers max id + 1.
ClassificationMetrics classification_metrics(std::span<const int> truth, std::span<const int> predicted,
                                             int n_classes = 0);
RegressionMetrics regression_metrics(std::span<const double> truth, std::span<const double> predicted);

struct Evaluation {
  std::optional<ClassificationMetrics> classification;
  std::optional<RegressionMetrics> regression;
  // Accuracy for classifiers, negated MAE for regressors: larger is better.
  double score() const;
};

Evaluation evaluate(const TrainedModel& model, const Dataset& test);

struct CvReport {
  std::vector<Evaluation> folds;
  Evaluation mean;  // per-fold averages; confusion matrices are summed
};

using FoldEvaluator = std::function<Evaluation(const Dataset& train, const Dataset& test)>;
using Trainer = std::function<TrainedModel(const Dataset& train)>;

// Each trainer fits its own standardizer, so statistics never leak from test folds.
CvReport kfold_cv(const Dataset& data, int k, const FoldEvaluator& evaluator, std::uint64_t seed);
CvReport kfold_cv(const Dataset& data, int k, const Trainer& trainer, std::uint64_t seed);

enum class ParamScale { kLinear, kLog, kInteger };

struct ParamRange {
  std::string name;
  double lo = 0.0;
  double hi = 0.0;
  ParamScale scale = ParamScale::kLinear;
};

struct SearchSpace {
  std::vector<ParamRange> params;
};

using ParamSet = std::map<std::string, double>;

struct Trial {
  std::size_t index = 0;
  ParamSet params;
  double score = 0.0;
};

struct SearchResult {
  ParamSet best;
  double best_score = 0.0;
  std::size_t best_index = 0;
  std::vector<Trial> trials;
};

// Maximizes objective; the first trial wins ties.
SearchResult random_search(const SearchSpace& space, int n_trials,
                           const std::function<double(const ParamSet&)>& objective, std::uint64_t seed);

// 1-2 hidden layers of 8-128 units, log-uniform rates and penalties.
SearchSpace default_search_space(ModelKind kind);
// Keys: learning_rate, l2, svm_c, svr_epsilon, epochs, batch_size, hidden_layers, hidden_units.
Hyperparams apply_params(Hyperparams base, const ParamSet& params);

}  // namespace voxpipe::models
