#include "msfm/qp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "msfm/errors.hpp"

namespace msfm {

QpResult solve_bounded_ls(const Eigen::SparseMatrix<double>& a, const Eigen::VectorXd& b,
                          const std::vector<double>& lower, double ridge) {
    return solve_bounded_ls(a, b, Eigen::MatrixXd(0, a.cols()), Eigen::VectorXd(0), lower,
                            ridge);
}

QpResult solve_bounded_ls(const Eigen::SparseMatrix<double>& a, const Eigen::VectorXd& b,
                          const Eigen::MatrixXd& u, const Eigen::VectorXd& d,
                          const std::vector<double>& lower, double ridge) {
    const int n = static_cast<int>(a.cols());
    const int ku = static_cast<int>(u.rows());
    if (static_cast<int>(lower.size()) != n)
        throw Error("solve_bounded_ls: lower bound vector size mismatch");
    if (!(ridge > 0)) throw Error("solve_bounded_ls: ridge must be positive");
    if (ku > 0 && (static_cast<int>(u.cols()) != n || static_cast<int>(d.size()) != ku))
        throw Error("solve_bounded_ls: dense row dimensions mismatch");

    // sparse part of the normal matrix; the dense rows are applied separately
    Eigen::SparseMatrix<double> h = (a.transpose() * a).pruned();
    for (int i = 0; i < n; ++i) h.coeffRef(i, i) += ridge;
    h.makeCompressed();
    Eigen::VectorXd c = a.transpose() * b;
    if (ku > 0) c += u.transpose() * d;

    auto h_apply = [&](const Eigen::VectorXd& v) -> Eigen::VectorXd {
        Eigen::VectorXd out = h * v;
        if (ku > 0) out += u.transpose() * (u * v);
        return out;
    };

    auto is_bounded = [&](int i) { return std::isfinite(lower[i]); };

    // feasible start: bounded coordinates at max(bound, 1), free at 0
    Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
    for (int i = 0; i < n; ++i)
        if (is_bounded(i)) x[i] = std::max(lower[i], 1.0);

    std::vector<char> active(n, 0);
    QpResult res;

    const int max_outer = 3 * n + 10;
    for (int outer = 0; outer < max_outer; ++outer) {
        ++res.iterations;

        // unconstrained solve on the free set (active vars pinned at bounds)
        std::vector<int> free_idx;
        free_idx.reserve(n);
        std::vector<int> pos(n, -1);
        for (int i = 0; i < n; ++i)
            if (!active[i]) {
                pos[i] = static_cast<int>(free_idx.size());
                free_idx.push_back(i);
            }
        if (free_idx.empty()) break;

        const int m = static_cast<int>(free_idx.size());
        std::vector<Eigen::Triplet<double>> trips;
        Eigen::VectorXd rhs = Eigen::VectorXd::Zero(m);
        for (int i : free_idx) rhs[pos[i]] = c[i];
        for (int k = 0; k < h.outerSize(); ++k)
            for (Eigen::SparseMatrix<double>::InnerIterator it(h, k); it; ++it) {
                int r = static_cast<int>(it.row()), col = static_cast<int>(it.col());
                if (pos[r] >= 0 && pos[col] >= 0)
                    trips.emplace_back(pos[r], pos[col], it.value());
                else if (pos[r] >= 0 && pos[col] < 0)
                    rhs[pos[r]] -= it.value() * lower[col];
            }
        Eigen::MatrixXd uf;
        if (ku > 0) {
            // pinned coordinates feed through the dense rows too
            Eigen::VectorXd xp = Eigen::VectorXd::Zero(n);
            for (int i = 0; i < n; ++i)
                if (active[i]) xp[i] = lower[i];
            const Eigen::VectorXd up = u * xp;
            uf.resize(ku, m);
            for (int i : free_idx) uf.col(pos[i]) = u.col(i);
            rhs -= uf.transpose() * up;
        }

        Eigen::SparseMatrix<double> hff(m, m);
        hff.setFromTriplets(trips.begin(), trips.end());
        Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver(hff);
        if (solver.info() != Eigen::Success)
            throw NumericError("bounded least squares: reduced system factorization failed");

        // Woodbury: (hff + uf^T uf)^-1 via the k x k capacitance matrix
        Eigen::MatrixXd z;
        Eigen::LDLT<Eigen::MatrixXd> cap;
        if (ku > 0) {
            z = solver.solve(Eigen::MatrixXd(uf.transpose()));
            cap.compute(Eigen::MatrixXd::Identity(ku, ku) + uf * z);
        }
        auto solve_reduced = [&](const Eigen::VectorXd& r) -> Eigen::VectorXd {
            Eigen::VectorXd y = solver.solve(r);
            if (ku > 0) y -= z * cap.solve(uf * y);
            return y;
        };
        auto apply_reduced = [&](const Eigen::VectorXd& v) -> Eigen::VectorXd {
            Eigen::VectorXd out = hff * v;
            if (ku > 0) out += uf.transpose() * (uf * v);
            return out;
        };

        Eigen::VectorXd xf = solve_reduced(rhs);
        // iterative refinement tightens the KKT residuals; the near-singular
        // sparse part under the Woodbury correction needs a few passes
        const double rhs_scale = 1.0 + rhs.lpNorm<Eigen::Infinity>();
        for (int pass = 0; pass < 8; ++pass) {
            const Eigen::VectorXd resid = rhs - apply_reduced(xf);
            if (resid.lpNorm<Eigen::Infinity>() <= 1e-14 * rhs_scale) break;
            xf += solve_reduced(resid);
        }

        // walk from the current feasible point toward the solve result,
        // clamping the first bounded coordinate that hits its bound
        Eigen::VectorXd target = x;
        for (int i : free_idx) target[i] = xf[pos[i]];
        double alpha = 1.0;
        int hit = -1;
        for (int i : free_idx) {
            if (!is_bounded(i) || target[i] >= lower[i]) continue;
            double denom = x[i] - target[i];
            if (denom <= 0) continue;
            double step = (x[i] - lower[i]) / denom;
            if (step < alpha) {
                alpha = step;
                hit = i;
            }
        }
        if (hit >= 0) {
            x += alpha * (target - x);
            x[hit] = lower[hit];
            active[hit] = 1;
            // coordinates that reached their bound in the same step
            for (int i : free_idx)
                if (is_bounded(i) && !active[i] && x[i] <= lower[i] + 1e-12) {
                    x[i] = lower[i];
                    active[i] = 1;
                }
            continue;
        }
        x = target;

        // multipliers of the active set; release the most negative one
        Eigen::VectorXd g = h_apply(x) - c;
        const double release_tol = -1e-12 * (1.0 + c.lpNorm<Eigen::Infinity>());
        int worst = -1;
        double worst_g = release_tol;
        for (int i = 0; i < n; ++i)
            if (active[i] && g[i] < worst_g) {
                worst_g = g[i];
                worst = i;
            }
        if (worst < 0) break;
        active[worst] = 0;
    }

    Eigen::VectorXd g = h_apply(x) - c;
    res.stationarity = 0.0;
    res.complementarity = 0.0;
    res.n_active = 0;
    for (int i = 0; i < n; ++i) {
        if (active[i]) {
            ++res.n_active;
            res.complementarity =
                std::max(res.complementarity, std::abs(g[i] * (x[i] - lower[i])));
        } else {
            res.stationarity = std::max(res.stationarity, std::abs(g[i]));
        }
    }
    res.x = std::move(x);
    return res;
}

}  // namespace msfm
