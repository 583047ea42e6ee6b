#pragma once

#include <Eigen/Dense>
#include <random>
#include <vector>

#include "voxpipe/clustering.hpp"
#include "voxpipe/features.hpp"
#include "voxpipe/payload.hpp"

// Reference implementations shared by the unit tests and the acceptance run.
namespace voxpipe::test {

using Partition = std::vector<std::vector<std::size_t>>;

double cos_sim(const Eigen::MatrixXd& x, Eigen::Index i, Eigen::Index j);

// Connected components of the thresholded similarity graph by BFS.
Partition bfs_components(const Eigen::MatrixXd& x, double tau);

// Agglomerative clustering straight from the definition: linkage recomputed
// from all pairwise distances at every step, until k clusters remain.
Partition naive_agglomerative(const Eigen::MatrixXd& x, cluster::Linkage linkage, cluster::Metric metric, int k);

// Gaussian rows with no near-zero row (cosine needs a direction).
Eigen::MatrixXd random_rows(int n, int d, std::mt19937_64& rng);

// Up to 5 rows and 5 extra columns of mixed cells, categories and awkward text.
Payload random_payload(std::mt19937_64& rng);

// One-frame spectrogram holding `bins`.
features::FrameMatrix spectrum_of(std::vector<double> bins, int sr = 16000);

double rel_diff(double a, double b);

}  // namespace voxpipe::test
