#pragma once

#include "grasp/attention.hpp"
#include "grasp/autodiff.hpp"
#include "grasp/geometry.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace grasp {

inline constexpr std::uint64_t kDefaultFrozenSeed = 0x6a09e667f3bcc908ULL;
inline constexpr std::size_t kFrozenBlocks = 4;

struct GraspConfig
{
    std::size_t image_size = 64;
    std::size_t patch_size = 8;
    std::size_t token_dim = 64;
    std::size_t heads = 4;
    std::size_t prototypes = 32;
    std::size_t decoder_width = 64;
    std::size_t frozen_width = 64;  // width of each frozen encoder block
    std::size_t vm_hidden = 32;
    bool sdf_query_mod = false;
    // Evaluation-time intervention: replaces every gate value with a constant.
    std::optional<double> gate_override;

    std::size_t grid() const { return image_size / patch_size; }
    std::size_t tokens() const { return grid() * grid(); }
    std::size_t patch_pixels() const { return patch_size * patch_size; }
    void validate() const;
};

nlohmann::json to_json(const GraspConfig& config);
GraspConfig grasp_config_from_json(const nlohmann::json& j, GraspConfig base = {});

// Every parameter group. Frozen blocks are fixed by frozen_seed and never
// receive gradients.
struct GraspParams
{
    std::uint64_t frozen_seed = kDefaultFrozenSeed;
    std::vector<Tensor> frozen_weights;  // kFrozenBlocks matrices
    std::vector<Tensor> frozen_biases;

    Tensor proj_w, proj_b;  // 4*frozen_width -> D

    Tensor vm_w1, vm_b1, vm_w2, vm_b2;  // 3 -> vm_hidden -> D
    Tensor vm_wq, vm_wk, vm_wv, vm_wo;
    Tensor gamma;  // zero-initialized residual scale

    Tensor prototypes;  // N_p x D
    Tensor spm_wq, spm_wk, spm_wv, spm_wo;

    Tensor gate_alpha, gate_beta;
    Tensor sdf_direction;  // D, zero-initialized, used only with sdf_query_mod

    Tensor trunk_w1, trunk_b1, trunk_w2, trunk_b2;
    Tensor occ_branch_w, occ_branch_b;
    Tensor amodal_branch_w, amodal_branch_b;
    Tensor fuse_w, fuse_b;  // 2*decoder_width -> decoder_width
    Tensor occ_head_w, occ_head_b;
    Tensor amodal_head_w, amodal_head_b;
};

struct ParamEntry
{
    std::string name;
    std::string group;
    Tensor* tensor = nullptr;
    bool trainable = true;
};

// Tape handles of the trainable parameters for one forward pass.
struct ParamVars
{
    Var proj_w, proj_b;
    Var vm_w1, vm_b1, vm_w2, vm_b2;
    AttentionWeights vm_attention;
    Var gamma;
    Var prototypes;
    AttentionWeights spm_attention;
    Var gate_alpha, gate_beta;
    Var sdf_direction;
    Var trunk_w1, trunk_b1, trunk_w2, trunk_b2;
    Var occ_branch_w, occ_branch_b;
    Var amodal_branch_w, amodal_branch_b;
    Var fuse_w, fuse_b;
    Var occ_head_w, occ_head_b;
    Var amodal_head_w, amodal_head_b;
    // Gradient-receiving leaves in trainable_tensors() order.
    std::vector<Var> trainable;
};

// Every intermediate of one forward pass (token-major, L rows).
struct ForwardTrace
{
    Var tokens;          // encoder output
    Var vm_tokens;       // visible-mask tokens
    Var fused;           // tokens after the visible-mask residual cross-attention
    Var prior;           // prototype mixture from the shape memory
    Var residual;        // prior - fused
    Var gate;            // per-token injection weight, length L
    Var injected;        // fused + gate * residual
    Var occ_features;    // occluded branch
    Var amodal_features; // amodal branch
    Var logits_occ;      // H x W
    Var logits_amodal;   // H x W
    std::vector<double> sdf_tokens;  // pooled normalized SDF, length L
    Tensor vm_attention;             // heads x L x L
    Tensor spm_attention;            // heads x L x N_p
};

struct DecoderOutput
{
    Var logits_occ;
    Var logits_amodal;
    Var occ_features;
    Var amodal_features;
};

struct PriorOutput
{
    Var prior;
    Var residual;
    Tensor attention;
};

class GraspModel
{
public:
    explicit GraspModel(GraspConfig config, std::uint64_t init_seed = 0, std::uint64_t frozen_seed = kDefaultFrozenSeed);
    GraspModel(GraspConfig config, GraspParams params);

    const GraspConfig& config() const noexcept { return config_; }
    GraspConfig& config() noexcept { return config_; }
    const GraspParams& params() const noexcept { return params_; }
    GraspParams& params() noexcept { return params_; }

    // All tensors in a fixed order; trainable = false for frozen blocks and,
    // when sdf_query_mod is off, for the SDF direction.
    std::vector<ParamEntry> parameters();
    std::vector<const Tensor*> trainable_tensors() const;
    // Trainable element counts per group; "frozen_encoder" is reported
    // separately by frozen_param_count().
    std::map<std::string, std::size_t> count_params() const;
    std::size_t trainable_param_count() const;
    std::size_t frozen_param_count() const;

    ParamVars bind(Tape& tape) const;

    // Frozen stack: p x p patches through four fixed blocks, outputs
    // concatenated (L x 4*frozen_width). No tape involvement.
    Tensor frozen_features(const GrayImage& image) const;
    Var encode(Tape& tape, const ParamVars& p, const GrayImage& image) const;
    Var vm_tokens(Tape& tape, const ParamVars& p, const BinaryMask& v) const;
    // tokens + gamma * CrossAttn(Q = tokens, K = V = vm tokens)
    Var vm_encode_fuse(Tape& tape, const ParamVars& p, Var tokens, const BinaryMask& v, Var* vm_out = nullptr,
                       Tensor* attention = nullptr) const;
    PriorOutput spm(Tape& tape, const ParamVars& p, Var fused, const std::vector<double>& sdf_tokens) const;
    // sigmoid(alpha * d + beta), or the configured constant override.
    Var gate(Tape& tape, const ParamVars& p, const std::vector<double>& sdf_tokens) const;
    DecoderOutput decode(Tape& tape, const ParamVars& p, Var injected) const;
    // Heads only: occluded logits from F_o, amodal logits from fuse([F_a; F_o]).
    DecoderOutput decode_heads(Tape& tape, const ParamVars& p, Var occ_features, Var amodal_features) const;

    std::vector<double> sdf_tokens(const BinaryMask& v) const;

    ForwardTrace forward(Tape& tape, const ParamVars& p, const GrayImage& image, const BinaryMask& v) const;

private:
    void check_image(std::size_t height, std::size_t width) const;

    GraspConfig config_;
    GraspParams params_;
    std::shared_ptr<const std::vector<std::size_t>> unpatchify_index_;
};

// F_out = fused + s * (prior - fused), row-wise; exactly `fused` where s = 0
// and exactly `prior` where s = 1.
Var inject(Var fused, Var prior, Var gate);

// Elementwise sigmoid(alpha * d + beta) on plain values.
std::vector<double> gate_values(const std::vector<double>& sdf_tokens, double alpha, double beta);

// Row-major token index -> pixel mapping that reassembles L x p^2 patches into
// an H x W image, and the inverse pixel -> patch-vector layout.
std::vector<std::size_t> unpatchify_index(std::size_t image_size, std::size_t patch_size);
std::vector<std::size_t> patchify_index(std::size_t image_size, std::size_t patch_size);

// ---- checkpoints -------------------------------------------------------------

inline constexpr const char* kCheckpointVersion = "grasp-checkpoint/1";

// One JSON header line (config, seeds, step, metadata, groups with byte
// lengths and tensor shapes) followed by raw little-endian float64 blocks in
// header order.
void save_checkpoint(const std::filesystem::path& path, GraspModel& model, std::uint64_t init_seed, std::size_t step,
                     const nlohmann::json& metadata = nlohmann::json::object());

struct LoadedCheckpoint
{
    GraspModel model;
    std::uint64_t init_seed = 0;
    std::size_t step = 0;
    nlohmann::json metadata;
};

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

} // namespace grasp
