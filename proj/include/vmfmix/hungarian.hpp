// Apache License, Version 2.0, refer to LICENSE.txt
//
// Minimum-cost bipartite assignment (Kuhn-Munkres with potentials),
// used to align fitted components with ground truth.

#pragma once

#include <Eigen/Dense>
#include <limits>
#include <stdexcept>
#include <vector>

namespace vmfmix {

// Returns row_to_col: row i is assigned column row_to_col[i], minimizing
// the total cost over a square matrix.
inline std::vector<int> min_cost_assignment(const Eigen::MatrixXd& cost) {
    const int n = int(cost.rows());
    if (cost.cols() != n || n < 1)
        throw std::invalid_argument("min_cost_assignment: square non-empty matrix required");
    const double inf = std::numeric_limits<double>::infinity();

    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
    std::vector<int> p(n + 1, 0), way(n + 1, 0);
    for (int i = 1; i <= n; ++i) {
        p[0] = i;
        int j0 = 0;
        std::vector<double> minv(n + 1, inf);
        std::vector<char> used(n + 1, 0);
        do {
            used[j0] = 1;
            const int i0 = p[j0];
            int j1 = -1;
            double delta = inf;
            for (int j = 1; j <= n; ++j) {
                if (used[j])
                    continue;
                const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (int j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            const int j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0);
    }

    std::vector<int> row_to_col(static_cast<std::size_t>(n), -1);
    for (int j = 1; j <= n; ++j)
        if (p[j] > 0)
            row_to_col[static_cast<std::size_t>(p[j] - 1)] = j - 1;
    return row_to_col;
}

}  // namespace vmfmix
