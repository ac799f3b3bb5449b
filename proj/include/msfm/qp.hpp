#pragma once

#include <vector>

#include <Eigen/Sparse>

#include "msfm/types.hpp"

namespace msfm {

struct QpResult {
    Eigen::VectorXd x;
    double stationarity = 0.0;     // max |gradient| over free coordinates
    double complementarity = 0.0;  // max |gradient * slack| over bounded coordinates
    int iterations = 0;
    int n_active = 0;              // coordinates resting on their bound
};

// minimize ||A x - b||^2 + ridge ||x||^2  subject to  x_i >= lower_i wherever
// lower_i is finite. Primal active-set method: starts from a feasible point,
// alternates unconstrained solves on the free set with bound clamping, and
// releases bound coordinates with negative multipliers one at a time.
// ridge must be > 0 so the reduced systems stay positive definite.
QpResult solve_bounded_ls(const Eigen::SparseMatrix<double>& a, const Eigen::VectorXd& b,
                          const std::vector<double>& lower, double ridge);

// Same problem with a few extra dense rows u (k x n), rhs d:
// minimize ||A x - b||^2 + ||u x - d||^2 + ridge ||x||^2, x >= lower. The
// dense rows enter through a rank-k update of the factorized sparse normal
// matrix (Woodbury), so a row touching every column stays cheap.
QpResult solve_bounded_ls(const Eigen::SparseMatrix<double>& a, const Eigen::VectorXd& b,
                          const Eigen::MatrixXd& u, const Eigen::VectorXd& d,
                          const std::vector<double>& lower, double ridge);

}  // namespace msfm
