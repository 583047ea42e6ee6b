#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace voxpipe::cluster {

// a.b / (|a| |b|), clamped to [-1, 1]. Zero vectors are undefined.
double cosine_similarity(std::span<const double> a, std::span<const double> b);

class DisjointSet {
 public:
  explicit DisjointSet(std::size_t n);
  std::size_t find(std::size_t x);
  bool unite(std::size_t a, std::size_t b);
  std::size_t size() const { return parent_.size(); }

 private:
  std::vector<std::size_t> parent_;
  std::vector<std::size_t> rank_;
};

struct ClusterResult {
  std::vector<int> ids;              // dense 0..count-1 in order of first appearance
  std::vector<std::string> labels;   // inherited seed label or "cluster_<id>"
  int count = 0;
  std::string params;                // human-readable summary of the call
};

// Rows as sets of row indices, each sorted, outer list sorted; for comparing partitions.
std::vector<std::vector<std::size_t>> partition_of(std::span<const int> ids);

// Unions every pair with cosine similarity >= tau. With seed labels, each
// component takes the lexicographically smallest label among its members,
// and components sharing a label end up in one cluster.
ClusterResult disjoint_set_cluster(const Eigen::MatrixXd& x, double tau,
                                   std::span<const std::optional<std::string>> seed_labels = {});

enum class Linkage { kSingle, kAverage, kComplete };
enum class Metric { kCosine, kEuclidean };

std::string_view to_string(Linkage l);
Linkage parse_linkage(std::string_view text);
std::string_view to_string(Metric m);
Metric parse_metric(std::string_view text);

struct AgglomerativeParams {
  Linkage linkage = Linkage::kAverage;
  Metric metric = Metric::kCosine;
  std::optional<int> n_clusters;             // exactly one of these two
  std::optional<double> distance_threshold;  // merge while distance <= threshold
};

ClusterResult agglomerative(const Eigen::MatrixXd& x, const AgglomerativeParams& params);

struct GmmParams {
  int k = 2;
  std::uint64_t seed = 0;
  int max_iter = 200;
  double tol = 1e-6;
  double variance_floor = 1e-6;
};

struct GmmModel {
  Eigen::VectorXd weights;    // k
  Eigen::MatrixXd means;      // k x d
  Eigen::MatrixXd variances;  // k x d, diagonal covariances
  double variance_floor = 1e-6;
  std::vector<double> log_likelihood;  // total data log-likelihood per EM iteration
  int iterations = 0;
  bool converged = false;
  std::vector<std::string> warnings;
};

// Rows are put in lexicographic order first, so row order never matters.
GmmModel gmm_fit(const Eigen::MatrixXd& x, const GmmParams& params);

struct GmmAssignment {
  std::vector<int> labels;
  Eigen::MatrixXd responsibilities;  // n x k, rows sum to 1
};

// Mixing weights are normalized here, so any positive scale works.
GmmAssignment gmm_assign(const GmmModel& model, const Eigen::MatrixXd& x);
double gmm_log_likelihood(const GmmModel& model, const Eigen::MatrixXd& x);

}  // namespace voxpipe::cluster
