#include "voxpipe/clustering.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>

#include "voxpipe/error.hpp"

namespace voxpipe::cluster {

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw ShapeError("vectors have " + std::to_string(a.size()) + " and " + std::to_string(b.size()) + " dims");
  }
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (!(na > 0) || !(nb > 0)) throw UndefinedInputError("cosine similarity of a zero vector is undefined");
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

DisjointSet::DisjointSet(std::size_t n) : parent_(n), rank_(n, 0) {
  std::iota(parent_.begin(), parent_.end(), std::size_t{0});
}

std::size_t DisjointSet::find(std::size_t x) {
  while (parent_[x] != x) {
    parent_[x] = parent_[parent_[x]];
    x = parent_[x];
  }
  return x;
}

bool DisjointSet::unite(std::size_t a, std::size_t b) {
  a = find(a);
  b = find(b);
  if (a == b) return false;
  if (rank_[a] < rank_[b]) std::swap(a, b);
  parent_[b] = a;
  if (rank_[a] == rank_[b]) ++rank_[a];
  return true;
}

std::vector<std::vector<std::size_t>> partition_of(std::span<const int> ids) {
  std::map<int, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < ids.size(); ++i) groups[ids[i]].push_back(i);
  std::vector<std::vector<std::size_t>> out;
  for (auto& [id, members] : groups) out.push_back(std::move(members));
  std::sort(out.begin(), out.end());
  return out;
}

namespace {

std::span<const double> row_span(const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>& m,
                                 Eigen::Index r) {
  return {m.data() + r * m.cols(), static_cast<std::size_t>(m.cols())};
}

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Dense ids in order of first appearance of each key.
template <typename Key>
std::vector<int> densify(const std::vector<Key>& keys, int& count) {
  std::map<Key, int> seen;
  std::vector<int> ids(keys.size());
  for (std::size_t i = 0; i < keys.size(); ++i) {
    auto [it, fresh] = seen.emplace(keys[i], static_cast<int>(seen.size()));
    ids[i] = it->second;
  }
  count = static_cast<int>(seen.size());
  return ids;
}

void default_labels(ClusterResult& r) {
  r.labels.resize(r.ids.size());
  for (std::size_t i = 0; i < r.ids.size(); ++i) r.labels[i] = "cluster_" + std::to_string(r.ids[i]);
}

}  // namespace

ClusterResult disjoint_set_cluster(const Eigen::MatrixXd& x, double tau,
                                   std::span<const std::optional<std::string>> seed_labels) {
  if (!(tau > -1.0 && tau <= 1.0)) throw ParameterError("threshold must lie in (-1, 1]");
  const auto n = static_cast<std::size_t>(x.rows());
  if (!seed_labels.empty() && seed_labels.size() != n) {
    throw ShapeError(std::to_string(seed_labels.size()) + " seed labels for " + std::to_string(n) + " rows");
  }
  const RowMajor rows = x;
  DisjointSet ds(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (cosine_similarity(row_span(rows, static_cast<Eigen::Index>(i)), row_span(rows, static_cast<Eigen::Index>(j))) >=
          tau) {
        ds.unite(i, j);
      }
    }
  }
  if (n == 1) cosine_similarity(row_span(rows, 0), row_span(rows, 0));

  ClusterResult r;
  std::ostringstream p;
  p << "disjoint_set tau=" << tau;
  r.params = p.str();
  if (seed_labels.empty() || std::none_of(seed_labels.begin(), seed_labels.end(),
                                          [](const auto& l) { return l.has_value(); })) {
    std::vector<std::size_t> roots(n);
    for (std::size_t i = 0; i < n; ++i) roots[i] = ds.find(i);
    r.ids = densify(roots, r.count);
    default_labels(r);
    return r;
  }

  // Labels that co-occur in a component are equivalent; the smallest names the class.
  std::map<std::string, std::size_t> label_index;
  for (const auto& l : seed_labels) {
    if (l) label_index.emplace(*l, 0);
  }
  std::vector<std::string> names;
  for (auto& [name, idx] : label_index) {
    idx = names.size();
    names.push_back(name);
  }
  DisjointSet label_sets(names.size());
  std::map<std::size_t, std::size_t> component_label;  // root -> label index
  for (std::size_t i = 0; i < n; ++i) {
    if (!seed_labels[i]) continue;
    const std::size_t li = label_index[*seed_labels[i]];
    auto [it, fresh] = component_label.emplace(ds.find(i), li);
    if (!fresh) label_sets.unite(it->second, li);
  }
  std::vector<std::size_t> canonical(names.size());
  for (std::size_t li = 0; li < names.size(); ++li) canonical[li] = names.size();
  for (std::size_t li = 0; li < names.size(); ++li) {
    auto& c = canonical[label_sets.find(li)];
    c = std::min(c, li);  // names are sorted, so the smallest index is the smallest label
  }
  // Key: labeled clusters by canonical label, unlabeled ones by their root.
  std::vector<std::pair<int, std::size_t>> keys(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t root = ds.find(i);
    auto it = component_label.find(root);
    keys[i] = it == component_label.end() ? std::pair<int, std::size_t>{1, root}
                                          : std::pair<int, std::size_t>{0, canonical[label_sets.find(it->second)]};
  }
  r.ids = densify(keys, r.count);
  r.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    r.labels[i] = keys[i].first == 0 ? names[keys[i].second] : "cluster_" + std::to_string(r.ids[i]);
  }
  return r;
}

std::string_view to_string(Linkage l) {
  switch (l) {
    case Linkage::kSingle: return "single";
    case Linkage::kAverage: return "average";
    case Linkage::kComplete: return "complete";
  }
  return "average";
}

Linkage parse_linkage(std::string_view text) {
  if (text == "single") return Linkage::kSingle;
  if (text == "average") return Linkage::kAverage;
  if (text == "complete") return Linkage::kComplete;
  throw ParameterError("unknown linkage '" + std::string(text) + "'");
}

std::string_view to_string(Metric m) { return m == Metric::kCosine ? "cosine" : "euclidean"; }

Metric parse_metric(std::string_view text) {
  if (text == "cosine") return Metric::kCosine;
  if (text == "euclidean") return Metric::kEuclidean;
  throw ParameterError("unknown metric '" + std::string(text) + "'");
}

ClusterResult agglomerative(const Eigen::MatrixXd& x, const AgglomerativeParams& params) {
  const auto n = static_cast<std::size_t>(x.rows());
  if (n < 1) throw ParameterError("agglomerative clustering needs at least one row");
  if (params.n_clusters.has_value() == params.distance_threshold.has_value()) {
    throw ParameterError("give exactly one of n_clusters and distance_threshold");
  }
  if (params.n_clusters && (*params.n_clusters < 1 || static_cast<std::size_t>(*params.n_clusters) > n)) {
    throw ParameterError("n_clusters=" + std::to_string(*params.n_clusters) + " outside 1.." + std::to_string(n));
  }
  const RowMajor rows = x;
  std::vector<std::vector<double>> dist(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const auto a = row_span(rows, static_cast<Eigen::Index>(i));
      const auto b = row_span(rows, static_cast<Eigen::Index>(j));
      double d = 0.0;
      if (params.metric == Metric::kCosine) {
        d = 1.0 - cosine_similarity(a, b);
      } else {
        for (std::size_t c = 0; c < a.size(); ++c) d += (a[c] - b[c]) * (a[c] - b[c]);
        d = std::sqrt(d);
      }
      dist[i][j] = dist[j][i] = d;
    }
  }
  if (n == 1 && params.metric == Metric::kCosine) cosine_similarity(row_span(rows, 0), row_span(rows, 0));

  // Cluster slots are keyed by their smallest row index, which a merge preserves.
  std::vector<bool> active(n, true);
  std::vector<std::size_t> sizes(n, 1);
  std::vector<std::size_t> owner(n);
  std::iota(owner.begin(), owner.end(), std::size_t{0});
  std::size_t clusters = n;
  const std::size_t target = params.n_clusters ? static_cast<std::size_t>(*params.n_clusters) : 1;
  while (clusters > target) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t bi = 0, bj = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (!active[i]) continue;
      for (std::size_t j = i + 1; j < n; ++j) {
        if (active[j] && dist[i][j] < best) {
          best = dist[i][j];
          bi = i;
          bj = j;
        }
      }
    }
    if (params.distance_threshold && !(best <= *params.distance_threshold)) break;
    for (std::size_t k = 0; k < n; ++k) {
      if (!active[k] || k == bi || k == bj) continue;
      double d = 0.0;
      switch (params.linkage) {
        case Linkage::kSingle: d = std::min(dist[bi][k], dist[bj][k]); break;
        case Linkage::kComplete: d = std::max(dist[bi][k], dist[bj][k]); break;
        case Linkage::kAverage:
          d = (static_cast<double>(sizes[bi]) * dist[bi][k] + static_cast<double>(sizes[bj]) * dist[bj][k]) /
              static_cast<double>(sizes[bi] + sizes[bj]);
          break;
      }
      dist[bi][k] = dist[k][bi] = d;
    }
    active[bj] = false;
    sizes[bi] += sizes[bj];
    for (auto& o : owner) {
      if (o == bj) o = bi;
    }
    --clusters;
  }
  ClusterResult r;
  r.ids = densify(owner, r.count);
  default_labels(r);
  std::ostringstream p;
  p << "agglomerative linkage=" << to_string(params.linkage) << " metric=" << to_string(params.metric);
  if (params.n_clusters) p << " k=" << *params.n_clusters;
  if (params.distance_threshold) p << " t=" << *params.distance_threshold;
  r.params = p.str();
  return r;
}

}  // namespace voxpipe::cluster
