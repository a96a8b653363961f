#include "grasp/attention.hpp"

#include "grasp/errors.hpp"

#include <algorithm>
#include <cmath>

namespace grasp {

AttentionResult multihead_cross_attention(Var q, Var k, Var v, const AttentionWeights& w, std::size_t heads)
{
    const Shape& qs = q.shape();
    const Shape& ks = k.shape();
    if (qs.size() != 2 || ks.size() != 2 || v.shape() != ks || ks[1] != qs[1])
        throw DimensionError("cross-attention: query " + shape_string(qs) + ", key " + shape_string(ks) +
                             ", value " + shape_string(v.shape()));
    const std::size_t dim = qs[1];
    if (heads == 0 || dim % heads != 0)
        throw ConfigError("cross-attention: token dim " + std::to_string(dim) + " is not divisible by " +
                          std::to_string(heads) + " heads");
    const std::size_t head_dim = dim / heads;
    const std::size_t lq = qs[0], lk = ks[0];

    Var queries = matmul(q, w.query);
    Var keys = matmul(k, w.key);
    Var values = matmul(v, w.value);
    const double temperature = 1.0 / std::sqrt(static_cast<double>(head_dim));

    AttentionResult result;
    result.weights = Tensor({heads, lq, lk});
    std::vector<Var> mixed;
    mixed.reserve(heads);
    for (std::size_t h = 0; h < heads; ++h) {
        Var qh = heads == 1 ? queries : slice(queries, 1, h * head_dim, head_dim);
        Var kh = heads == 1 ? keys : slice(keys, 1, h * head_dim, head_dim);
        Var vh = heads == 1 ? values : slice(values, 1, h * head_dim, head_dim);
        Var attn = softmax(scale(matmul(qh, transpose(kh)), temperature), 1);
        const auto& a = attn.value().values();
        std::copy(a.begin(), a.end(), result.weights.values().begin() + static_cast<std::ptrdiff_t>(h * lq * lk));
        mixed.push_back(matmul(attn, vh));
    }
    Var joined = heads == 1 ? mixed.front() : concat(mixed, 1);
    result.output = matmul(joined, w.output);
    return result;
}

} // namespace grasp
