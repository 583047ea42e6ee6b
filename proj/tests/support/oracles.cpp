#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>

#include "test_support.hpp"

namespace voxpipe::test {

using cluster::Linkage;
using cluster::Metric;

double cos_sim(const Eigen::MatrixXd& x, Eigen::Index i, Eigen::Index j) {
  const double c = x.row(i).dot(x.row(j)) / (x.row(i).norm() * x.row(j).norm());
  return std::clamp(c, -1.0, 1.0);
}

Partition bfs_components(const Eigen::MatrixXd& x, double tau) {
  const auto n = static_cast<std::size_t>(x.rows());
  std::vector<int> comp(n, -1);
  int next = 0;
  for (std::size_t s = 0; s < n; ++s) {
    if (comp[s] >= 0) continue;
    std::deque<std::size_t> q{s};
    comp[s] = next;
    while (!q.empty()) {
      const auto u = q.front();
      q.pop_front();
      for (std::size_t v = 0; v < n; ++v) {
        if (comp[v] < 0 && cos_sim(x, Eigen::Index(u), Eigen::Index(v)) >= tau) {
          comp[v] = next;
          q.push_back(v);
        }
      }
    }
    ++next;
  }
  return cluster::partition_of(comp);
}

Partition naive_agglomerative(const Eigen::MatrixXd& x, Linkage linkage, Metric metric, int k) {
  const auto n = static_cast<std::size_t>(x.rows());
  auto dist = [&](std::size_t a, std::size_t b) {
    if (metric == Metric::kCosine) return 1.0 - cos_sim(x, Eigen::Index(a), Eigen::Index(b));
    return (x.row(Eigen::Index(a)) - x.row(Eigen::Index(b))).norm();
  };
  std::vector<std::vector<std::size_t>> clusters;
  for (std::size_t i = 0; i < n; ++i) clusters.push_back({i});
  while (static_cast<int>(clusters.size()) > k) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t ba = 0, bb = 0;
    for (std::size_t a = 0; a < clusters.size(); ++a) {
      for (std::size_t b = a + 1; b < clusters.size(); ++b) {
        double agg = linkage == Linkage::kSingle ? std::numeric_limits<double>::infinity()
                     : linkage == Linkage::kComplete ? -1.0 : 0.0;
        for (auto i : clusters[a]) {
          for (auto j : clusters[b]) {
            const double dij = dist(i, j);
            if (linkage == Linkage::kSingle) agg = std::min(agg, dij);
            else if (linkage == Linkage::kComplete) agg = std::max(agg, dij);
            else agg += dij;
          }
        }
        if (linkage == Linkage::kAverage) agg /= double(clusters[a].size() * clusters[b].size());
        if (agg < best) {
          best = agg;
          ba = a;
          bb = b;
        }
      }
    }
    clusters[ba].insert(clusters[ba].end(), clusters[bb].begin(), clusters[bb].end());
    clusters.erase(clusters.begin() + static_cast<long>(bb));
  }
  for (auto& c : clusters) std::sort(c.begin(), c.end());
  std::sort(clusters.begin(), clusters.end());
  return clusters;
}

Eigen::MatrixXd random_rows(int n, int d, std::mt19937_64& rng) {
  Eigen::MatrixXd x = random_matrix(n, d, rng);
  for (int i = 0; i < n; ++i)
    if (x.row(i).norm() < 1e-3) x(i, 0) += 1.0;
  return x;
}

Payload random_payload(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1e6, 1e6);
  static const std::vector<std::string> texts = {"", "a,b", "quote\"d", "line\nbreak", "7.88", "  pad ", "x"};
  const ColumnCategory cats[] = {ColumnCategory::kPlain, ColumnCategory::kFeature, ColumnCategory::kInference,
                                 ColumnCategory::kTiming};
  const std::size_t n = rng() % 6;
  std::vector<std::string> paths;
  for (std::size_t i = 0; i < n; ++i) paths.push_back("/clips/" + std::to_string(i) + ",x.wav");
  Payload p(std::string(kInitPathsColumn), paths);
  const int ncols = static_cast<int>(rng() % 6);
  for (int c = 0; c < ncols; ++c) {
    Column col{"col_" + std::to_string(c), {}};
    for (std::size_t i = 0; i < n; ++i) {
      switch (rng() % 4) {
        case 0: col.values.emplace_back(); break;
        case 1: col.values.emplace_back(u(rng)); break;
        case 2: col.values.emplace_back(texts[rng() % texts.size()]); break;
        default: col.values.emplace_back(std::ldexp(u(rng), static_cast<int>(rng() % 200) - 100)); break;
      }
    }
    p = add_columns(p, {std::move(col)}, cats[rng() % 4]);
  }
  if (n > 0 && rng() % 2) p.mark_processed(paths[0]);
  return p;
}

features::FrameMatrix spectrum_of(std::vector<double> bins, int sr) {
  features::FrameMatrix m(1, bins.size());
  m.values = std::move(bins);
  m.sample_rate = sr;
  m.n_fft = (m.dims - 1) * 2;
  return m;
}

double rel_diff(double a, double b) {
  return std::abs(a - b) / std::max(1e-300, std::max(std::abs(a), std::abs(b)));
}

}  // namespace voxpipe::test
