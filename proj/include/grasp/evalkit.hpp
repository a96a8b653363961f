#pragma once

#include "grasp/model.hpp"
#include "grasp/synthdata.hpp"

#include <json.hpp>

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace grasp {

struct Prediction
{
    BinaryMask amodal;
    BinaryMask occluded;
    // Diagnostics, empty for predictors that are not backed by a model.
    std::vector<double> gate;        // per token
    std::vector<double> sdf_tokens;  // per token
    Tensor spm_attention;            // heads x L x N_p
    Tensor logits_amodal;            // H x W
    Tensor logits_occ;               // H x W
};

class Predictor
{
public:
    virtual ~Predictor() = default;
    // `instance` supplies the image; v_input is the visible mask fed to the network.
    virtual Prediction predict(const SceneInstance& instance, const BinaryMask& v_input) const = 0;
};

// sigmoid(logit) > threshold, pixelwise.
BinaryMask threshold_logits(const Tensor& logits, double threshold = 0.5);

Prediction predict(const GraspModel& model, const GrayImage& image, const BinaryMask& v_input,
                   double threshold = 0.5);

class ModelPredictor : public Predictor
{
public:
    explicit ModelPredictor(const GraspModel& model, double threshold = 0.5) : model_(model), threshold_(threshold) {}
    Prediction predict(const SceneInstance& instance, const BinaryMask& v_input) const override;

private:
    const GraspModel& model_;
    double threshold_;
};

// Returns a copy of the model that replaces the gate by a constant (or
// restores the learned gate when c is empty).
GraspModel with_gate_override(const GraspModel& model, std::optional<double> c);

BinaryMask postprocess_union(const BinaryMask& amodal, const BinaryMask& v_input);

struct TwoPassTrace
{
    std::size_t passes = 0;
    Prediction first;
    Prediction second;
    BinaryMask v_ref;       // first.amodal \ first.occluded
    bool fallback = false;  // v_ref was empty, the second pass used v_pred
};

TwoPassTrace two_pass(const Predictor& predictor, const SceneInstance& instance, const BinaryMask& v_pred);
TwoPassTrace two_pass(const GraspModel& model, const GrayImage& image, const BinaryMask& v_pred,
                      double threshold = 0.5);

enum class Protocol
{
    Oracle,
    Standard,
};

enum class OccMode
{
    OccHead,             // occluded head output vs O_gt
    AmodalMinusVisible,  // (amodal prediction \ V_gt) vs O_gt
};

std::string to_string(Protocol p);
Protocol protocol_from_string(const std::string& s);
std::string to_string(OccMode m);
OccMode occ_mode_from_string(const std::string& s);

struct EvalOptions
{
    Protocol protocol = Protocol::Oracle;
    std::optional<double> gate_override;  // applied by evaluate(model, ...)
    bool use_two_pass = false;
    bool use_pp = false;
    OccMode occ_mode = OccMode::OccHead;
    double threshold = 0.5;
    std::uint64_t eval_seed = 0;
};

nlohmann::json to_json(const EvalOptions& options);

// Network input mask under the standard protocol.
BinaryMask standard_vm(const SceneInstance& instance, std::uint64_t eval_seed);

struct InstanceRow
{
    std::size_t id = 0;
    double full_iou = 0.0;
    std::optional<double> occ_iou;  // empty when O_gt is empty
    double occ_ratio = 0.0;
    std::optional<double> vm_iou;   // standard protocol only
    std::optional<double> mean_gate;
};

struct Stratum
{
    double lo = 0.0;
    double hi = 0.0;
    std::size_t n = 0;
    std::optional<double> mean_occ_iou;
};

struct StratumTable
{
    std::string key;
    std::vector<Stratum> bins;
    std::size_t outside = 0;  // occluded rows whose key falls in no bin
};

inline const std::vector<double> kOccRatioBins{0.0, 0.25, 0.5, 0.75, 1.0};
inline const std::vector<double> kVmIouBins{0.5, 0.65, 0.75, 0.85, 0.95, 1.0};

// Occluded rows only; half-open bins [e_i, e_{i+1}) except the last, which is closed.
StratumTable stratify(const std::vector<InstanceRow>& rows, const std::string& key, const std::vector<double>& edges);

struct GroupStat
{
    std::size_t n = 0;
    double mean = 0.0;
    double std = 0.0;
};

enum class GridPosition
{
    Corner,
    Edge,
    Center,
};

GridPosition grid_position(std::size_t token, std::size_t grid);

struct GateStats
{
    std::vector<double> edges;
    std::vector<GroupStat> per_bin;           // per-instance mean gate, by occ_ratio bin
    std::array<GroupStat, 3> per_position{};  // per-token gate: corner, edge, center
};

struct GateSample
{
    double occ_ratio = 0.0;
    std::vector<double> gate;  // per token, row-major over the grid
};

GateStats gate_statistics(const std::vector<GateSample>& samples, std::size_t grid,
                          const std::vector<double>& edges = kOccRatioBins);

struct AttentionStats
{
    std::vector<double> occluded_mean;  // mean prototype distribution over tokens with d > 0
    std::vector<double> visible_mean;   // ... with d <= 0
    double jsd = 0.0;                   // base 2
    double occluded_top1 = 0.0;
    double visible_top1 = 0.0;
    std::size_t occluded_tokens = 0;
    std::size_t visible_tokens = 0;
    std::size_t instances = 0;
    std::size_t skipped = 0;  // instances with an empty group
};

struct AttentionSample
{
    Tensor attention;                // heads x L x N_p
    std::vector<double> sdf_tokens;  // length L
};

AttentionStats attention_statistics(const std::vector<AttentionSample>& samples);

// Jensen-Shannon divergence in bits.
double jsd(const std::vector<double>& p, const std::vector<double>& q);

struct EvalReport
{
    std::string protocol;  // "oracle", "standard" or "intervention <c>"
    EvalOptions options;
    std::vector<InstanceRow> rows;
    double full_miou = 0.0;
    std::optional<double> occ_miou;
    std::size_t occluded_instances = 0;
    StratumTable by_occ_ratio;
    std::optional<StratumTable> by_vm_iou;
    std::optional<GateStats> gate;
    std::optional<AttentionStats> attention;
    std::size_t vm_iou_below_range = 0;  // standard protocol rows with vm_iou < 0.5
};

// Runs the protocol with a generic predictor (no gate or attention stats
// unless the predictions carry them). gate_override in options is ignored.
EvalReport evaluate(const Predictor& predictor, const std::vector<SceneInstance>& data, const EvalOptions& options);
EvalReport evaluate(const GraspModel& model, const std::vector<SceneInstance>& data, const EvalOptions& options);

// Four evaluations of one checkpoint: learned gate, then s = 0, 0.5, 1.
struct AblationRow
{
    std::string setting;
    std::optional<double> gate;
    EvalReport report;
};

struct Ablation
{
    std::vector<AblationRow> rows;
    // occ mIoU(learned gate) - occ mIoU(s = 0), per occ_ratio bin
    std::vector<std::optional<double>> bin_deltas;
};

Ablation ablate(const GraspModel& model, const std::vector<SceneInstance>& data, EvalOptions options);

GateStats gate_stats(const GraspModel& model, const std::vector<SceneInstance>& data);
AttentionStats attention_stats(const GraspModel& model, const std::vector<SceneInstance>& data);

nlohmann::json to_json(const StratumTable& table);
nlohmann::json to_json(const GateStats& stats);
nlohmann::json to_json(const AttentionStats& stats);
nlohmann::json to_json(const EvalReport& report);

// report.json and report.csv in dir.
void write_report(const std::filesystem::path& dir, const EvalReport& report, const nlohmann::json& run_config);
void write_ablation_csv(const std::filesystem::path& path, const Ablation& ablation, const nlohmann::json& run_config);

} // namespace grasp
