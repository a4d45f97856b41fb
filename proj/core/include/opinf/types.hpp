#pragma once

#include <Eigen/Dense>

namespace opinf {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

}  // namespace opinf
