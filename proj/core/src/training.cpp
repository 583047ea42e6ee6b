#include "voxpipe/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>
#include <unordered_map>

#include "voxpipe/error.hpp"

namespace voxpipe::models {

std::vector<double> sample_weights_by_bins(std::span<const double> y, double bin_width) {
  if (y.empty()) throw DegenerateDataError("cannot weight an empty target");
  if (!(bin_width > 0) || !std::isfinite(bin_width)) throw ParameterError("bin width must be positive");
  std::vector<long long> bins(y.size());
  std::unordered_map<long long, std::size_t> counts;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (!std::isfinite(y[i])) throw DegenerateDataError("non-finite target at row " + std::to_string(i));
    bins[i] = static_cast<long long>(std::floor(y[i] / bin_width));
    ++counts[bins[i]];
  }
  std::vector<double> w(y.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    w[i] = 1.0 / static_cast<double>(counts[bins[i]]);
    sum += w[i];
  }
  const double scale = static_cast<double>(y.size()) / sum;
  for (double& v : w) v *= scale;
  return w;
}

std::vector<int> equal_width_bins(std::span<const double> values, int n_bins) {
  if (n_bins < 1) throw ParameterError("need at least one bin");
  std::vector<int> out(values.size(), 0);
  if (values.empty()) return out;
  const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
  const double lo = *lo_it;
  const double width = (*hi_it - lo) / n_bins;
  if (!(width > 0)) return out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const auto b = static_cast<int>(std::floor((values[i] - lo) / width));
    out[i] = std::clamp(b, 0, n_bins - 1);
  }
  return out;
}

std::vector<std::string> age_gender_strata(std::span<const double> ages, std::span<const std::string> genders,
                                           int n_bins) {
  if (ages.size() != genders.size()) {
    throw ShapeError(std::to_string(ages.size()) + " ages but " + std::to_string(genders.size()) + " genders");
  }
  const auto bins = equal_width_bins(ages, n_bins);
  std::vector<std::string> out(ages.size());
  for (std::size_t i = 0; i < ages.size(); ++i) out[i] = "b" + std::to_string(bins[i]) + "|" + genders[i];
  return out;
}

Split stratified_split(std::span<const std::string> groups, double ratio, std::uint64_t seed) {
  if (!(ratio > 0.0 && ratio < 1.0)) throw ParameterError("split ratio must lie in (0, 1)");
  std::map<std::string, std::vector<std::size_t>> members;
  for (std::size_t i = 0; i < groups.size(); ++i) members[groups[i]].push_back(i);
  std::mt19937_64 rng(seed);
  Split s;
  for (auto& [name, idx] : members) {
    std::shuffle(idx.begin(), idx.end(), rng);
    std::size_t n_train = static_cast<std::size_t>(std::floor(ratio * static_cast<double>(idx.size()) + 0.5));
    if (idx.size() == 1) n_train = 1;
    n_train = std::min(n_train, idx.size());
    s.train.insert(s.train.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_train));
    s.holdout.insert(s.holdout.end(), idx.begin() + static_cast<std::ptrdiff_t>(n_train), idx.end());
  }
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.holdout.begin(), s.holdout.end());
  return s;
}

std::vector<std::vector<std::size_t>> kfold_indices(std::size_t n, int k, std::uint64_t seed) {
  if (k < 2) throw ParameterError("k-fold needs k >= 2, got " + std::to_string(k));
  if (n < static_cast<std::size_t>(k)) {
    throw ParameterError("k-fold needs at least k=" + std::to_string(k) + " samples, got " + std::to_string(n));
  }
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(perm.begin(), perm.end(), rng);
  const auto uk = static_cast<std::size_t>(k);
  std::vector<std::vector<std::size_t>> folds(uk);
  std::size_t at = 0;
  for (std::size_t f = 0; f < uk; ++f) {
    const std::size_t size = n / uk + (f < n % uk ? 1 : 0);
    folds[f].assign(perm.begin() + static_cast<std::ptrdiff_t>(at), perm.begin() + static_cast<std::ptrdiff_t>(at + size));
    std::sort(folds[f].begin(), folds[f].end());
    at += size;
  }
  return folds;
}

std::vector<std::string> merge_labels(std::span<const std::string> labels,
                                      const std::map<std::string, std::string>& mapping) {
  const std::set<std::string> seen(labels.begin(), labels.end());
  for (const auto& [from, to] : mapping) {
    if (!seen.count(from)) throw SchemaError("label mapping names unknown label '" + from + "'");
  }
  std::vector<std::string> out(labels.begin(), labels.end());
  for (auto& l : out) {
    auto it = mapping.find(l);
    if (it != mapping.end()) l = it->second;
  }
  return out;
}

ClassificationMetrics classification_metrics(std::span<const int> truth, std::span<const int> predicted,
                                             int n_classes) {
  if (truth.size() != predicted.size()) {
    throw ShapeError(std::to_string(truth.size()) + " true labels but " + std::to_string(predicted.size()) +
                     " predictions");
  }
  if (truth.empty()) throw DegenerateDataError("no samples to score");
  int k = n_classes;
  if (k <= 0) {
    k = 1 + std::max(*std::max_element(truth.begin(), truth.end()),
                     *std::max_element(predicted.begin(), predicted.end()));
  }
  ClassificationMetrics m;
  m.confusion.assign(static_cast<std::size_t>(k), std::vector<long>(static_cast<std::size_t>(k), 0));
  long correct = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] < 0 || truth[i] >= k || predicted[i] < 0 || predicted[i] >= k) {
      throw BoundsError("class id outside 0.." + std::to_string(k - 1));
    }
    ++m.confusion[static_cast<std::size_t>(truth[i])][static_cast<std::size_t>(predicted[i])];
    if (truth[i] == predicted[i]) ++correct;
  }
  m.accuracy = static_cast<double>(correct) / static_cast<double>(truth.size());
  double f1_sum = 0.0;
  int present = 0;
  for (std::size_t c = 0; c < static_cast<std::size_t>(k); ++c) {
    long tp = m.confusion[c][c], fp = 0, fn = 0;
    for (std::size_t o = 0; o < static_cast<std::size_t>(k); ++o) {
      if (o == c) continue;
      fp += m.confusion[o][c];
      fn += m.confusion[c][o];
    }
    if (tp + fp + fn == 0) continue;  // class absent from both sides
    f1_sum += 2.0 * static_cast<double>(tp) / static_cast<double>(2 * tp + fp + fn);
    ++present;
  }
  m.macro_f1 = present ? f1_sum / present : 0.0;
  return m;
}

RegressionMetrics regression_metrics(std::span<const double> truth, std::span<const double> predicted) {
  if (truth.size() != predicted.size()) {
    throw ShapeError(std::to_string(truth.size()) + " targets but " + std::to_string(predicted.size()) +
                     " predictions");
  }
  if (truth.empty()) throw DegenerateDataError("no samples to score");
  double abs_sum = 0.0, sq_sum = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const double e = predicted[i] - truth[i];
    abs_sum += std::abs(e);
    sq_sum += e * e;
  }
  const auto n = static_cast<double>(truth.size());
  return {abs_sum / n, std::sqrt(sq_sum / n)};
}

double Evaluation::score() const {
  if (classification) return classification->accuracy;
  if (regression) return -regression->mae;
  return 0.0;
}

Evaluation evaluate(const TrainedModel& model, const Dataset& test) {
  const Prediction p = predict(model, test);
  Evaluation e;
  if (model.task() == Task::kClassification) {
    std::vector<int> truth(test.size());
    for (std::size_t i = 0; i < truth.size(); ++i) truth[i] = static_cast<int>(test.y[static_cast<Eigen::Index>(i)]);
    e.classification = classification_metrics(truth, p.class_ids, static_cast<int>(model.class_names.size()));
  } else {
    e.regression = regression_metrics(std::span<const double>(test.y.data(), test.size()), p.values);
  }
  return e;
}

CvReport kfold_cv(const Dataset& data, int k, const FoldEvaluator& evaluator, std::uint64_t seed) {
  const auto folds = kfold_indices(data.size(), k, seed);
  CvReport report;
  for (std::size_t f = 0; f < folds.size(); ++f) {
    std::vector<std::size_t> train;
    for (std::size_t o = 0; o < folds.size(); ++o) {
      if (o != f) train.insert(train.end(), folds[o].begin(), folds[o].end());
    }
    std::sort(train.begin(), train.end());
    report.folds.push_back(evaluator(subset(data, train), subset(data, folds[f])));
  }
  const auto nf = static_cast<double>(report.folds.size());
  const auto& first = report.folds.front();
  if (first.classification) {
    ClassificationMetrics mean;
    mean.confusion = first.classification->confusion;
    for (auto& row : mean.confusion) std::fill(row.begin(), row.end(), 0);
    for (const auto& e : report.folds) {
      if (!e.classification) throw ParameterError("folds mix classification and regression metrics");
      mean.accuracy += e.classification->accuracy / nf;
      mean.macro_f1 += e.classification->macro_f1 / nf;
      const auto& c = e.classification->confusion;
      if (c.size() != mean.confusion.size()) throw ShapeError("fold confusion matrices differ in size");
      for (std::size_t r = 0; r < c.size(); ++r) {
        for (std::size_t q = 0; q < c.size(); ++q) mean.confusion[r][q] += c[r][q];
      }
    }
    report.mean.classification = mean;
  } else if (first.regression) {
    RegressionMetrics mean;
    for (const auto& e : report.folds) {
      if (!e.regression) throw ParameterError("folds mix classification and regression metrics");
      mean.mae += e.regression->mae / nf;
      mean.rmse += e.regression->rmse / nf;
    }
    report.mean.regression = mean;
  }
  return report;
}

CvReport kfold_cv(const Dataset& data, int k, const Trainer& trainer, std::uint64_t seed) {
  return kfold_cv(
      data, k, FoldEvaluator([&](const Dataset& train, const Dataset& test) { return evaluate(trainer(train), test); }),
      seed);
}

SearchResult random_search(const SearchSpace& space, int n_trials,
                           const std::function<double(const ParamSet&)>& objective, std::uint64_t seed) {
  if (space.params.empty()) throw ParameterError("search space is empty");
  if (n_trials < 1) throw ParameterError("need at least one trial");
  for (const auto& p : space.params) {
    if (!(p.lo <= p.hi) || !std::isfinite(p.lo) || !std::isfinite(p.hi)) {
      throw ParameterError("parameter '" + p.name + "' has an invalid range");
    }
    if (p.scale == ParamScale::kLog && !(p.lo > 0)) {
      throw ParameterError("log-scaled parameter '" + p.name + "' needs a positive range");
    }
    if (p.scale == ParamScale::kInteger && std::ceil(p.lo) > std::floor(p.hi)) {
      throw ParameterError("integer parameter '" + p.name + "' has no integer in range");
    }
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  SearchResult result;
  for (int t = 0; t < n_trials; ++t) {
    Trial trial;
    trial.index = static_cast<std::size_t>(t);
    for (const auto& p : space.params) {
      double v = p.lo;
      switch (p.scale) {
        case ParamScale::kLinear: v = p.lo + (p.hi - p.lo) * unit(rng); break;
        case ParamScale::kLog: {
          const double u = unit(rng);
          v = p.lo == p.hi ? p.lo : std::exp(std::log(p.lo) + (std::log(p.hi) - std::log(p.lo)) * u);
          break;
        }
        case ParamScale::kInteger: {
          std::uniform_int_distribution<long long> pick(static_cast<long long>(std::ceil(p.lo)),
                                                        static_cast<long long>(std::floor(p.hi)));
          v = static_cast<double>(pick(rng));
          break;
        }
      }
      trial.params[p.name] = v;
    }
    trial.score = objective(trial.params);
    if (t == 0 || trial.score > result.best_score) {
      result.best = trial.params;
      result.best_score = trial.score;
      result.best_index = trial.index;
    }
    result.trials.push_back(std::move(trial));
  }
  return result;
}

SearchSpace default_search_space(ModelKind kind) {
  SearchSpace s;
  switch (kind) {
    case ModelKind::kLogistic:
      s.params = {{"learning_rate", 1e-3, 0.5, ParamScale::kLog}, {"l2", 1e-6, 1e-1, ParamScale::kLog}};
      break;
    case ModelKind::kLinearSvm:
      s.params = {{"learning_rate", 1e-3, 0.5, ParamScale::kLog}, {"svm_c", 1e-2, 1e2, ParamScale::kLog}};
      break;
    case ModelKind::kSvr:
      s.params = {{"learning_rate", 1e-3, 0.5, ParamScale::kLog},
                  {"svm_c", 1e-2, 1e2, ParamScale::kLog},
                  {"svr_epsilon", 1e-3, 1.0, ParamScale::kLog}};
      break;
    case ModelKind::kRidge:
      s.params = {{"l2", 1e-6, 1e1, ParamScale::kLog}};
      break;
    case ModelKind::kMlp:
      s.params = {{"learning_rate", 1e-3, 0.5, ParamScale::kLog},
                  {"l2", 1e-6, 1e-1, ParamScale::kLog},
                  {"hidden_layers", 1, 2, ParamScale::kInteger},
                  {"hidden_units", 8, 128, ParamScale::kInteger}};
      break;
  }
  return s;
}

Hyperparams apply_params(Hyperparams base, const ParamSet& params) {
  int layers = static_cast<int>(base.hidden.size());
  int units = base.hidden.empty() ? 32 : base.hidden.front();
  bool reshape = false;
  for (const auto& [key, v] : params) {
    if (key == "learning_rate") base.learning_rate = v;
    else if (key == "l2") base.l2 = v;
    else if (key == "svm_c") base.svm_c = v;
    else if (key == "svr_epsilon") base.svr_epsilon = v;
    else if (key == "epochs") base.epochs = static_cast<int>(std::lround(v));
    else if (key == "batch_size") base.batch_size = static_cast<int>(std::lround(v));
    else if (key == "hidden_layers") { layers = static_cast<int>(std::lround(v)); reshape = true; }
    else if (key == "hidden_units") { units = static_cast<int>(std::lround(v)); reshape = true; }
    else throw ParameterError("unknown hyperparameter '" + key + "'");
  }
  if (reshape) base.hidden.assign(static_cast<std::size_t>(std::max(layers, 0)), units);
  return base;
}

}  // namespace voxpipe::models
