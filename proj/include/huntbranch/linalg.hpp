#pragma once

#include <Eigen/Dense>

namespace huntbranch {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Matrix exponential by scaling and squaring with a diagonal Padé
/// approximant of degree 3, 5, 7, 9 or 13 (Higham's degree selection by
/// 1-norm). Relative accuracy near unit roundoff for well-scaled inputs.
Matrix expm(const Matrix& a);

/// Maximum absolute column sum.
double norm1(const Matrix& a);

}  // namespace huntbranch
