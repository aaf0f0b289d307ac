#pragma once

#include <Eigen/Dense>

namespace pfode {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

}  // namespace pfode
