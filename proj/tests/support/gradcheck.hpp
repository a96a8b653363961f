#pragma once

#include "grasp/autodiff.hpp"
#include "grasp/rng.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

namespace grasp::testing {

// |analytic - numeric| relative to the larger magnitude, with an absolute
// floor so that gradients at round-off level compare absolutely.
inline double relative_error(double analytic, double numeric, double floor = 1e-5)
{
    return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

struct GradcheckResult
{
    double max_rel = 0.0;
    std::size_t checked = 0;
    std::string worst;  // "input k element i"
};

using Builder = std::function<Var(Tape&, const std::vector<Var>&)>;

inline Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0)
{
    Tensor t(std::move(shape));
    for (double& x : t.values())
        x = rng.uniform(lo, hi);
    return t;
}

// Elements drawn with |x| in [lo, hi] and random sign: keeps kinks (relu) and
// poles (division) away from the finite-difference stencil.
inline Tensor away_from_zero(Shape shape, Rng& rng, double lo = 0.1, double hi = 1.0)
{
    Tensor t(std::move(shape));
    for (double& x : t.values())
        x = (rng.bernoulli(0.5) ? 1.0 : -1.0) * rng.uniform(lo, hi);
    return t;
}

// Central differences on sum(f(inputs) * R) for a fixed random R, so every
// output element contributes with its own weight.
inline GradcheckResult gradcheck(const Builder& f, std::vector<Tensor> inputs, std::uint64_t seed, double h = 1e-6)
{
    Tensor weights;
    auto objective = [&](Tape& tape, std::vector<Var>& leaves) {
        leaves.clear();
        for (const auto& t : inputs)
            leaves.push_back(tape.variable(t));
        Var out = f(tape, leaves);
        if (weights.shape() != out.shape()) {
            Rng rng(derive_seed(seed, "gradcheck-weights"));
            weights = random_tensor(out.shape(), rng, 0.5, 1.5);
        }
        return sum(mul(out, tape.constant(weights)));
    };

    Tape tape;
    std::vector<Var> leaves;
    Var loss = objective(tape, leaves);
    tape.backward(loss);
    std::vector<Tensor> analytic;
    for (Var v : leaves)
        analytic.push_back(tape.grad(v));

    GradcheckResult result;
    for (std::size_t k = 0; k < inputs.size(); ++k)
        for (std::size_t i = 0; i < inputs[k].size(); ++i) {
            const double x = inputs[k][i];
            inputs[k][i] = x + h;
            Tape tp;
            std::vector<Var> lp;
            const double fp = objective(tp, lp).value().item();
            inputs[k][i] = x - h;
            Tape tm;
            std::vector<Var> lm;
            const double fm = objective(tm, lm).value().item();
            inputs[k][i] = x;
            const double numeric = (fp - fm) / (2.0 * h);
            const double rel = relative_error(analytic[k][i], numeric);
            ++result.checked;
            if (rel > result.max_rel) {
                result.max_rel = rel;
                result.worst = "input " + std::to_string(k) + " element " + std::to_string(i);
            }
        }
    return result;
}

} // namespace grasp::testing
