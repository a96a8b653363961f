#pragma once

#include "grasp/dataset.hpp"
#include "grasp/model.hpp"

#include <json.hpp>

#include <filesystem>
#include <functional>
#include <vector>

namespace grasp {

inline constexpr double kOccludedLossWeight = 1.5;
inline constexpr double kDiceSmoothing = 1e-6;

// Mean over pixels of the logit-form binary cross-entropy.
Var bce(Var logits, const BinaryMask& target);
// 1 - (2 sum(p g) + eps) / (sum(p) + sum(g) + eps), p = sigmoid(logits).
Var dice(Var logits, const BinaryMask& target, double eps = kDiceSmoothing);

struct LossBreakdown
{
    double bce_amodal = 0.0;
    double dice_amodal = 0.0;
    double bce_occ = 0.0;
    double dice_occ = 0.0;
    double amodal = 0.0;     // bce_amodal + dice_amodal
    double occluded = 0.0;   // weight * (bce_occ + dice_occ)
    double total = 0.0;      // amodal + occluded
};

struct LossTerms
{
    Var total;
    LossBreakdown values;
};

// The occluded target is amodal_gt \ visible_gt from ground truth, never from
// the (possibly perturbed) network input mask.
LossTerms total_loss(const ForwardTrace& trace, const BinaryMask& amodal_gt, const BinaryMask& visible_gt,
                     double occluded_weight = kOccludedLossWeight);

struct TrainConfig
{
    double lr = 1e-4;
    std::size_t batch_size = 8;
    std::size_t steps = 2000;
    std::uint64_t seed = 0;
    double noise_probability = 0.5;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 1e-4;
    double occluded_weight = kOccludedLossWeight;
    std::size_t checkpoint_every = 0;  // 0: final checkpoint only

    void validate() const;
};

nlohmann::json to_json(const TrainConfig& config);
TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base = {});

// Cosine decay from lr0 at step 0 to 0 at step total.
double cosine_lr(double lr0, std::size_t step, std::size_t total);

// Adam with decoupled weight decay.
class AdamW
{
public:
    AdamW(double beta1, double beta2, double eps, double weight_decay);

    void step(const std::vector<Tensor*>& params, const std::vector<Tensor>& grads, double lr);
    std::size_t steps_taken() const noexcept { return t_; }

private:
    double beta1_, beta2_, eps_, weight_decay_;
    std::size_t t_ = 0;
    std::vector<Tensor> m_, v_;
};

struct BatchResult
{
    LossBreakdown mean;
    std::vector<Tensor> grads;  // one per trainable tensor, gradient of the batch-mean total loss
};

// Forward + backward over a batch with the given network input masks. Each
// instance runs on its own tape; gradients are summed in batch order.
BatchResult batch_gradients(const GraspModel& model, const std::vector<const SceneInstance*>& batch,
                            const std::vector<BinaryMask>& inputs, double occluded_weight = kOccludedLossWeight);

struct LossRecord
{
    std::size_t step = 0;
    double lr = 0.0;
    LossBreakdown loss;
};

struct TrainOutputs
{
    std::filesystem::path checkpoint;  // empty: no checkpoint files
    std::filesystem::path loss_csv;    // empty: no loss curve file
    nlohmann::json run_config = nlohmann::json::object();
    std::uint64_t init_seed = 0;
    std::function<void(const LossRecord&)> on_step;
};

struct TrainResult
{
    std::vector<LossRecord> curve;
};

// Per step: sample a batch (epoch-wise shuffles), draw the training input
// mask for each instance, forward, loss, backward, AdamW update at the
// cosine-decayed rate. Throws NumericError on a non-finite loss.
TrainResult train(GraspModel& model, const std::vector<SceneInstance>& data, const TrainConfig& config,
                  const TrainOutputs& outputs = {});

void write_loss_csv(const std::filesystem::path& path, const std::vector<LossRecord>& curve,
                    const nlohmann::json& run_config);

} // namespace grasp
