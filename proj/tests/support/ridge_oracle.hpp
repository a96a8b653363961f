#pragma once

#include "grasp/tensor.hpp"

#include <cmath>
#include <utility>
#include <vector>

namespace grasp::testing {

// Gaussian elimination with partial pivoting on the augmented system
// [[n, 1^T X], [X^T 1, X^T X + lambda I]] [b; w] = [1^T y; X^T y]; the
// intercept is not penalized.
inline std::vector<double> naive_ridge(const Tensor& x, const std::vector<double>& y, double lambda)
{
    const std::size_t n = x.dim(0), d = x.dim(1), m = d + 1;
    std::vector<std::vector<double>> a(m, std::vector<double>(m + 1, 0.0));
    auto feature = [&](std::size_t i, std::size_t j) { return j == 0 ? 1.0 : x.at(i, j - 1); };
    for (std::size_t r = 0; r < m; ++r) {
        for (std::size_t c = 0; c < m; ++c)
            for (std::size_t i = 0; i < n; ++i)
                a[r][c] += feature(i, r) * feature(i, c);
        if (r > 0)
            a[r][r] += lambda;
        for (std::size_t i = 0; i < n; ++i)
            a[r][m] += feature(i, r) * y[i];
    }
    for (std::size_t k = 0; k < m; ++k) {
        std::size_t p = k;
        for (std::size_t r = k + 1; r < m; ++r)
            if (std::abs(a[r][k]) > std::abs(a[p][k]))
                p = r;
        std::swap(a[k], a[p]);
        for (std::size_t r = k + 1; r < m; ++r) {
            const double f = a[r][k] / a[k][k];
            for (std::size_t c = k; c <= m; ++c)
                a[r][c] -= f * a[k][c];
        }
    }
    std::vector<double> sol(m);
    for (std::size_t k = m; k-- > 0;) {
        double s = a[k][m];
        for (std::size_t c = k + 1; c < m; ++c)
            s -= a[k][c] * sol[c];
        sol[k] = s / a[k][k];
    }
    return sol;  // intercept first
}

} // namespace grasp::testing
