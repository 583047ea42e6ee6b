#pragma once

#include <Eigen/Dense>
#include <vector>

#include "voxpipe/models.hpp"

namespace voxpipe::models::detail {

// Raw network outputs (n x outputs) for standardized inputs. Hidden layers
// use ReLU; the last layer is affine.
Eigen::MatrixXd forward(const std::vector<DenseLayer>& layers, const Eigen::MatrixXd& xs);

int present_class_count(const Dataset& data);
void require_classes(const Dataset& data);

}  // namespace voxpipe::models::detail
