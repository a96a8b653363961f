#pragma once

#include "grasp/model.hpp"
#include "grasp/synthdata.hpp"

#include <json.hpp>

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace grasp {

enum class ProbePosition
{
    PreCa,           // encoder tokens
    PostCa,          // tokens after the visible-mask cross-attention
    RandomBaseline,  // seeded Gaussian features of the same shape
};

std::string to_string(ProbePosition p);
ProbePosition probe_position_from_string(const std::string& s);

struct ProbeSet
{
    Tensor features;                     // n x D
    std::vector<double> targets;         // pooled normalized SDF per token
    std::vector<std::size_t> instance;   // source instance index per row
};

// Features are taken with the ground-truth visible mask as network input.
ProbeSet extract_probe_set(const GraspModel& model, const std::vector<SceneInstance>& data, ProbePosition position,
                           std::uint64_t seed = 0);

struct RidgeModel
{
    std::vector<double> weights;
    double intercept = 0.0;
    double lambda = 1.0;
};

// Solves (Xc^T Xc + lambda I) w = Xc^T (y - mean y) on column-centered X; the
// intercept is recovered from the column means.
RidgeModel ridge_fit(const Tensor& x, const std::vector<double>& y, double lambda = 1.0);
std::vector<double> ridge_predict(const RidgeModel& model, const Tensor& x);

// Empty when the targets have zero variance.
std::optional<double> r2_score(const std::vector<double>& truth, const std::vector<double>& predicted);
// Fraction of rows whose prediction has the sign of the target (0 counts as non-positive).
double sign_accuracy(const std::vector<double>& truth, const std::vector<double>& predicted);

struct ProbeResult
{
    ProbePosition position = ProbePosition::PreCa;
    std::optional<double> r2;
    double sign_accuracy = 0.0;
    double majority_sign_rate = 0.0;  // test-set frequency of the most common target sign
    std::size_t n_train = 0;
    std::size_t n_test = 0;
    double lambda = 1.0;
};

struct ProbeOptions
{
    double lambda = 1.0;
    std::uint64_t seed = 0;
    double train_fraction = 0.8;
};

struct ProbePair
{
    ProbePosition position;
    std::size_t instance = 0;
    std::size_t token = 0;
    double truth = 0.0;
    double predicted = 0.0;
};

struct ProbeReport
{
    ProbeOptions options;
    std::vector<ProbeResult> results;  // pre_ca, post_ca, random_baseline
    std::optional<double> delta_r2;    // post_ca - pre_ca
    double delta_sign_accuracy = 0.0;
    std::size_t train_instances = 0;
    std::size_t test_instances = 0;
    std::vector<ProbePair> pairs;      // test tokens
};

// Instance-level split: a seeded shuffle of instance indices, the first
// train_fraction of them train.
std::vector<bool> probe_split(std::size_t instances, double train_fraction, std::uint64_t seed);

ProbeResult fit_and_score(const ProbeSet& set, const std::vector<bool>& is_train, ProbePosition position,
                          double lambda, std::vector<double>* test_predictions = nullptr);

ProbeReport probe_report(const GraspModel& model, const std::vector<SceneInstance>& data,
                         const ProbeOptions& options = {});

nlohmann::json to_json(const ProbeResult& r);
nlohmann::json to_json(const ProbeReport& r);

// probe.json and probe_pairs.csv in dir.
void write_probe_report(const std::filesystem::path& dir, const ProbeReport& report,
                        const nlohmann::json& run_config);

} // namespace grasp
