#pragma once

// Test-only helpers: random tensor filling and the central finite-difference
// gradient oracle. The oracle re-runs an arbitrary forward closure and never
// touches the analytic backward path it is checking.

#include <cmath>
#include <functional>
#include <vector>

#include "localtrans/data.hpp"
#include "localtrans/tensor.hpp"

namespace lttest {

using localtrans::Rng;
using localtrans::Tensor;
using localtrans::scalar;

inline void fill_uniform(Tensor& t, Rng& rng, double lo = -1.0, double hi = 1.0) {
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<scalar>(rng.uniform(lo, hi));
}

inline Tensor random_tensor(std::vector<int> shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Tensor t(shape);
    fill_uniform(t, rng, lo, hi);
    return t;
}

// |a - f| relative to scale, floored so near-zero gradients compare sanely.
inline double rel_err(double analytic, double numeric, double floor = 1e-6) {
    const double s = std::max({std::abs(analytic), std::abs(numeric), floor});
    return std::abs(analytic - numeric) / s;
}

struct GradCheckResult {
    double max_rel_err = 0;
    double worst_analytic = 0;
    double worst_numeric = 0;
};

// Central finite differences of `forward` (a scalar function of the tensors
// behind `inputs`) with respect to every element of every input, compared
// against the provided analytic gradients.
inline GradCheckResult check_gradients(const std::function<double()>& forward,
                                       const std::vector<Tensor*>& inputs,
                                       const std::vector<const Tensor*>& analytic_grads,
                                       double step = 1e-5) {
    GradCheckResult res;
    for (std::size_t t = 0; t < inputs.size(); ++t) {
        Tensor& x = *inputs[t];
        const Tensor& g = *analytic_grads[t];
        for (std::size_t i = 0; i < x.size(); ++i) {
            const scalar saved = x[i];
            x[i] = saved + static_cast<scalar>(step);
            const double up = forward();
            x[i] = saved - static_cast<scalar>(step);
            const double down = forward();
            x[i] = saved;
            const double numeric = (up - down) / (2.0 * step);
            const double e = rel_err(static_cast<double>(g[i]), numeric);
            if (e > res.max_rel_err) {
                res.max_rel_err = e;
                res.worst_analytic = static_cast<double>(g[i]);
                res.worst_numeric = numeric;
            }
        }
    }
    return res;
}

} // namespace lttest
