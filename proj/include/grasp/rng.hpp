#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace grasp {

// Seed derivation: every random stream in the project is keyed by
// (base seed, purpose, a, b) so any stage can be replayed in isolation.
//   data   : scene i of a dataset uses base + i directly
//   "init" : parameter initialization
//   "noise": training-time visible-mask noise, keyed by (step, slot)
//   "batch": batch sampling, keyed by epoch
//   "eval" : standard-protocol mask perturbation, keyed by instance id
//   "probe": probe split and random baseline features
std::uint64_t derive_seed(std::uint64_t base, std::string_view purpose, std::uint64_t a = 0, std::uint64_t b = 0);

// mt19937_64 with distribution helpers defined here rather than by the
// standard library, whose distributions are implementation-defined. Streams
// are therefore identical across toolchains.
class Rng
{
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next() { return engine_(); }
    // Uniform in [0, 1).
    double uniform();
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    // Uniform integer in [lo, hi].
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);
    bool bernoulli(double p) { return uniform() < p; }
    double normal();
    double normal(double mean, double stddev) { return mean + stddev * normal(); }

private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

} // namespace grasp
