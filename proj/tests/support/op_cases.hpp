#pragma once

#include "grasp/attention.hpp"

#include "gradcheck.hpp"

#include <memory>

namespace grasp::testing {

struct OpCase
{
    const char* name;
    Builder f;
    std::function<std::vector<Tensor>(Rng&)> inputs;
};

// One randomized finite-difference case per differentiable op.
inline std::vector<OpCase> op_cases()
{
    auto index = std::make_shared<const std::vector<std::size_t>>(std::vector<std::size_t>{5, 0, 3, 3, 1, 2});
    return {
        {"transpose", [](Tape&, auto& x) { return transpose(x[0]); }, [](Rng& r) { return std::vector{random_tensor({3, 4}, r)}; }},
        {"add", [](Tape&, auto& x) { return add(x[0], x[1]); }, [](Rng& r) { return std::vector{random_tensor({3, 4}, r), random_tensor({3, 4}, r)}; }},
        {"add scalar", [](Tape&, auto& x) { return add(x[0], x[1]); }, [](Rng& r) { return std::vector{random_tensor({3, 4}, r), random_tensor({1}, r)}; }},
        {"sub", [](Tape&, auto& x) { return sub(x[1], x[0]); }, [](Rng& r) { return std::vector{random_tensor({1}, r), random_tensor({3, 4}, r)}; }},
        {"mul", [](Tape&, auto& x) { return mul(x[0], x[1]); }, [](Rng& r) { return std::vector{random_tensor({3, 4}, r), random_tensor({3, 4}, r)}; }},
        {"mul scalar", [](Tape&, auto& x) { return mul(x[1], x[0]); }, [](Rng& r) { return std::vector{random_tensor({2, 3}, r), random_tensor({1}, r)}; }},
        {"div", [](Tape&, auto& x) { return div(x[0], x[1]); }, [](Rng& r) { return std::vector{random_tensor({3, 4}, r), away_from_zero({3, 4}, r, 0.5, 2.0)}; }},
        {"div scalar", [](Tape&, auto& x) { return div(x[0], x[1]); }, [](Rng& r) { return std::vector{random_tensor({3, 4}, r), away_from_zero({1}, r, 0.5, 2.0)}; }},
        {"scale", [](Tape&, auto& x) { return scale(x[0], -1.7); }, [](Rng& r) { return std::vector{random_tensor({5}, r)}; }},
        {"add_constant", [](Tape&, auto& x) { return add_constant(x[0], 0.3); }, [](Rng& r) { return std::vector{random_tensor({5}, r)}; }},
        {"sigmoid", [](Tape&, auto& x) { return sigmoid(x[0]); }, [](Rng& r) { return std::vector{random_tensor({3, 3}, r, -4, 4)}; }},
        {"relu", [](Tape&, auto& x) { return relu(x[0]); }, [](Rng& r) { return std::vector{away_from_zero({3, 3}, r)}; }},
        {"tanh", [](Tape&, auto& x) { return tanh(x[0]); }, [](Rng& r) { return std::vector{random_tensor({3, 3}, r, -2, 2)}; }},
        {"softplus", [](Tape&, auto& x) { return softplus(x[0]); }, [](Rng& r) { return std::vector{random_tensor({3, 3}, r, -5, 5)}; }},
        {"softmax axis 0", [](Tape&, auto& x) { return softmax(x[0], 0); }, [](Rng& r) { return std::vector{random_tensor({4, 3}, r, -3, 3)}; }},
        {"softmax axis 1", [](Tape&, auto& x) { return softmax(x[0], 1); }, [](Rng& r) { return std::vector{random_tensor({4, 3}, r, -3, 3)}; }},
        {"softmax rank 3", [](Tape&, auto& x) { return softmax(x[0], 2); }, [](Rng& r) { return std::vector{random_tensor({2, 3, 4}, r, -3, 3)}; }},
        {"concat axis 0", [](Tape&, auto& x) { return concat({x[0], x[1]}, 0); }, [](Rng& r) { return std::vector{random_tensor({2, 3}, r), random_tensor({4, 3}, r)}; }},
        {"concat axis 1", [](Tape&, auto& x) { return concat({x[0], x[1], x[0]}, 1); }, [](Rng& r) { return std::vector{random_tensor({2, 3}, r), random_tensor({2, 1}, r)}; }},
        {"slice", [](Tape&, auto& x) { return slice(x[0], 1, 1, 2); }, [](Rng& r) { return std::vector{random_tensor({3, 4}, r)}; }},
        {"reshape", [](Tape&, auto& x) { return reshape(x[0], {6, 2}); }, [](Rng& r) { return std::vector{random_tensor({3, 4}, r)}; }},
        {"sum", [](Tape&, auto& x) { return sum(x[0]); }, [](Rng& r) { return std::vector{random_tensor({3, 4}, r)}; }},
        {"mean", [](Tape&, auto& x) { return mean(x[0]); }, [](Rng& r) { return std::vector{random_tensor({3, 4}, r)}; }},
        {"add_bias", [](Tape&, auto& x) { return add_bias(x[0], x[1]); }, [](Rng& r) { return std::vector{random_tensor({3, 4}, r), random_tensor({4}, r)}; }},
        {"scale_rows", [](Tape&, auto& x) { return scale_rows(x[0], x[1]); }, [](Rng& r) { return std::vector{random_tensor({3, 4}, r), random_tensor({3}, r)}; }},
        {"lerp_rows", [](Tape&, auto& x) { return lerp_rows(x[0], x[1], x[2]); }, [](Rng& r) { return std::vector{random_tensor({3, 4}, r), random_tensor({3, 4}, r), random_tensor({3}, r, 0.05, 0.95)}; }},
        {"gather", [index](Tape&, auto& x) { return gather(x[0], index, {2, 3}); }, [](Rng& r) { return std::vector{random_tensor({2, 3}, r)}; }},
        {"matmul", [](Tape&, auto& x) { return matmul(x[0], x[1]); }, [](Rng& r) { return std::vector{random_tensor({5, 7}, r), random_tensor({7, 3}, r)}; }},
        {"attention", [](Tape&, auto& x) { return multihead_cross_attention(x[0], x[1], x[2], {x[3], x[4], x[5], x[6]}, 2).output; }, [](Rng& r) {
             std::vector v{random_tensor({3, 8}, r), random_tensor({4, 8}, r), random_tensor({4, 8}, r)};
             for (int i = 0; i < 4; ++i)
                 v.push_back(random_tensor({8, 8}, r, -0.5, 0.5));
             return v;
         }},
        {"composite", [](Tape&, auto& x) { return tanh(mul(softplus(matmul(x[0], x[1])), sigmoid(matmul(x[0], x[1])))); }, [](Rng& r) { return std::vector{random_tensor({3, 4}, r), random_tensor({4, 2}, r)}; }},
    };
}

// Runs every op case over seeds [0, seeds) and returns the worst relative error.
inline double worst_op_error(std::uint64_t seeds, std::string* worst_case = nullptr)
{
    double worst = 0.0;
    for (const auto& c : op_cases())
        for (std::uint64_t seed = 0; seed < seeds; ++seed) {
            Rng rng(derive_seed(seed, c.name));
            const auto r = gradcheck(c.f, c.inputs(rng), seed, 1e-5);
            if (r.max_rel > worst) {
                worst = r.max_rel;
                if (worst_case)
                    *worst_case = std::string(c.name) + " seed " + std::to_string(seed);
            }
        }
    return worst;
}

} // namespace grasp::testing
