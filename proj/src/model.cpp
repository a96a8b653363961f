#include "grasp/model.hpp"

#include "grasp/errors.hpp"
#include "grasp/rng.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

namespace grasp {

using nlohmann::json;

void GraspConfig::validate() const
{
    if (patch_size == 0 || image_size == 0 || image_size % patch_size != 0)
        throw ConfigError("image size " + std::to_string(image_size) + " is not a multiple of patch size " +
                          std::to_string(patch_size));
    if (heads == 0 || token_dim == 0 || token_dim % heads != 0)
        throw ConfigError("token dim " + std::to_string(token_dim) + " is not divisible by " + std::to_string(heads) +
                          " heads");
    if (prototypes == 0)
        throw ConfigError("the prototype bank needs at least one prototype");
    if (decoder_width == 0 || frozen_width == 0 || vm_hidden == 0)
        throw ConfigError("layer widths must be positive");
    if (gate_override && !(*gate_override >= 0.0 && *gate_override <= 1.0))
        throw ConfigError("gate override must lie in [0, 1]");
}

json to_json(const GraspConfig& c)
{
    json j{{"image_size", c.image_size},       {"patch_size", c.patch_size},     {"token_dim", c.token_dim},
           {"heads", c.heads},                 {"prototypes", c.prototypes},     {"decoder_width", c.decoder_width},
           {"frozen_width", c.frozen_width},   {"vm_hidden", c.vm_hidden},       {"sdf_query_mod", c.sdf_query_mod}};
    j["gate_override"] = c.gate_override ? json(*c.gate_override) : json(nullptr);
    return j;
}

GraspConfig grasp_config_from_json(const json& j, GraspConfig c)
{
    try {
        c.image_size = j.value("image_size", c.image_size);
        c.patch_size = j.value("patch_size", c.patch_size);
        c.token_dim = j.value("token_dim", c.token_dim);
        c.heads = j.value("heads", c.heads);
        c.prototypes = j.value("prototypes", c.prototypes);
        c.decoder_width = j.value("decoder_width", c.decoder_width);
        c.frozen_width = j.value("frozen_width", c.frozen_width);
        c.vm_hidden = j.value("vm_hidden", c.vm_hidden);
        c.sdf_query_mod = j.value("sdf_query_mod", c.sdf_query_mod);
        if (j.contains("gate_override"))
            c.gate_override = j["gate_override"].is_null() ? std::nullopt
                                                           : std::optional<double>(j["gate_override"].get<double>());
    } catch (const json::exception& e) {
        throw ConfigError(std::string("model config: ") + e.what());
    }
    c.validate();
    return c;
}

std::vector<std::size_t> unpatchify_index(std::size_t image_size, std::size_t patch_size)
{
    const std::size_t grid = image_size / patch_size, pp = patch_size * patch_size;
    std::vector<std::size_t> index(image_size * image_size);
    for (std::size_t r = 0; r < image_size; ++r)
        for (std::size_t c = 0; c < image_size; ++c)
            index[r * image_size + c] =
                ((r / patch_size) * grid + c / patch_size) * pp + (r % patch_size) * patch_size + c % patch_size;
    return index;
}

std::vector<std::size_t> patchify_index(std::size_t image_size, std::size_t patch_size)
{
    const auto forward = unpatchify_index(image_size, patch_size);
    std::vector<std::size_t> inverse(forward.size());
    for (std::size_t pixel = 0; pixel < forward.size(); ++pixel)
        inverse[forward[pixel]] = pixel;
    return inverse;
}

namespace {

Tensor gaussian(Rng& rng, Shape shape, double stddev)
{
    Tensor t(std::move(shape));
    for (auto& v : t.values())
        v = rng.normal(0.0, stddev);
    return t;
}

Tensor linear_weight(Rng& rng, std::size_t fan_in, std::size_t fan_out)
{
    return gaussian(rng, {fan_in, fan_out}, 1.0 / std::sqrt(static_cast<double>(fan_in)));
}

GraspParams initialize(const GraspConfig& c, std::uint64_t init_seed, std::uint64_t frozen_seed)
{
    GraspParams p;
    p.frozen_seed = frozen_seed;
    Rng frozen(frozen_seed);
    std::size_t fan_in = c.patch_pixels();
    for (std::size_t b = 0; b < kFrozenBlocks; ++b) {
        p.frozen_weights.push_back(gaussian(frozen, {fan_in, c.frozen_width}, 1.5 / std::sqrt(double(fan_in))));
        p.frozen_biases.push_back(gaussian(frozen, {c.frozen_width}, 0.2));
        fan_in = c.frozen_width;
    }

    Rng rng(derive_seed(init_seed, "init"));
    const std::size_t d = c.token_dim, h = c.decoder_width;
    p.proj_w = linear_weight(rng, kFrozenBlocks * c.frozen_width, d);
    p.proj_b = Tensor({d});

    p.vm_w1 = linear_weight(rng, 3, c.vm_hidden);
    p.vm_b1 = Tensor({c.vm_hidden});
    p.vm_w2 = linear_weight(rng, c.vm_hidden, d);
    p.vm_b2 = Tensor({d});
    p.vm_wq = linear_weight(rng, d, d);
    p.vm_wk = linear_weight(rng, d, d);
    p.vm_wv = linear_weight(rng, d, d);
    p.vm_wo = linear_weight(rng, d, d);
    p.gamma = Tensor::scalar(0.0);

    p.prototypes = gaussian(rng, {c.prototypes, d}, 1.0);
    p.spm_wq = linear_weight(rng, d, d);
    p.spm_wk = linear_weight(rng, d, d);
    p.spm_wv = linear_weight(rng, d, d);
    p.spm_wo = linear_weight(rng, d, d);

    // A flat gate at initialization: alpha = 0 makes s independent of the mask.
    p.gate_alpha = Tensor::scalar(0.0);
    p.gate_beta = Tensor::scalar(0.0);
    p.sdf_direction = Tensor({d});

    p.trunk_w1 = linear_weight(rng, d, h);
    p.trunk_b1 = Tensor({h});
    p.trunk_w2 = linear_weight(rng, h, h);
    p.trunk_b2 = Tensor({h});
    p.occ_branch_w = linear_weight(rng, h, h);
    p.occ_branch_b = Tensor({h});
    p.amodal_branch_w = linear_weight(rng, h, h);
    p.amodal_branch_b = Tensor({h});
    p.fuse_w = linear_weight(rng, 2 * h, h);
    p.fuse_b = Tensor({h});
    p.occ_head_w = linear_weight(rng, h, c.patch_pixels());
    p.occ_head_b = Tensor({c.patch_pixels()});
    p.amodal_head_w = linear_weight(rng, h, c.patch_pixels());
    p.amodal_head_b = Tensor({c.patch_pixels()});
    return p;
}

Var linear(Var x, Var w, Var b) { return add_bias(matmul(x, w), b); }

std::vector<ParamEntry> list_params(GraspParams& p, bool sdf_query_mod)
{
    std::vector<ParamEntry> out;
    for (std::size_t b = 0; b < p.frozen_weights.size(); ++b) {
        out.push_back({"frozen_w" + std::to_string(b), "frozen_encoder", &p.frozen_weights[b], false});
        out.push_back({"frozen_b" + std::to_string(b), "frozen_encoder", &p.frozen_biases[b], false});
    }
    auto add = [&](const char* name, const char* group, Tensor& t, bool trainable = true) {
        out.push_back({name, group, &t, trainable});
    };
    add("proj_w", "projection", p.proj_w);
    add("proj_b", "projection", p.proj_b);
    add("vm_w1", "vm_encoder", p.vm_w1);
    add("vm_b1", "vm_encoder", p.vm_b1);
    add("vm_w2", "vm_encoder", p.vm_w2);
    add("vm_b2", "vm_encoder", p.vm_b2);
    add("vm_wq", "vm_encoder", p.vm_wq);
    add("vm_wk", "vm_encoder", p.vm_wk);
    add("vm_wv", "vm_encoder", p.vm_wv);
    add("vm_wo", "vm_encoder", p.vm_wo);
    add("gamma", "vm_encoder", p.gamma);
    add("prototypes", "prototypes", p.prototypes);
    add("spm_wq", "spm_attention", p.spm_wq);
    add("spm_wk", "spm_attention", p.spm_wk);
    add("spm_wv", "spm_attention", p.spm_wv);
    add("spm_wo", "spm_attention", p.spm_wo);
    add("gate_alpha", "gate", p.gate_alpha);
    add("gate_beta", "gate", p.gate_beta);
    add("sdf_direction", "sdf_direction", p.sdf_direction, sdf_query_mod);
    add("trunk_w1", "decoder", p.trunk_w1);
    add("trunk_b1", "decoder", p.trunk_b1);
    add("trunk_w2", "decoder", p.trunk_w2);
    add("trunk_b2", "decoder", p.trunk_b2);
    add("occ_branch_w", "decoder", p.occ_branch_w);
    add("occ_branch_b", "decoder", p.occ_branch_b);
    add("amodal_branch_w", "decoder", p.amodal_branch_w);
    add("amodal_branch_b", "decoder", p.amodal_branch_b);
    add("fuse_w", "decoder", p.fuse_w);
    add("fuse_b", "decoder", p.fuse_b);
    add("occ_head_w", "decoder", p.occ_head_w);
    add("occ_head_b", "decoder", p.occ_head_b);
    add("amodal_head_w", "decoder", p.amodal_head_w);
    add("amodal_head_b", "decoder", p.amodal_head_b);
    return out;
}

} // namespace

GraspModel::GraspModel(GraspConfig config, std::uint64_t init_seed, std::uint64_t frozen_seed)
    : config_(config)
{
    config_.validate();
    params_ = initialize(config_, init_seed, frozen_seed);
    unpatchify_index_ = std::make_shared<const std::vector<std::size_t>>(
        unpatchify_index(config_.image_size, config_.patch_size));
}

GraspModel::GraspModel(GraspConfig config, GraspParams params) : config_(config), params_(std::move(params))
{
    config_.validate();
    unpatchify_index_ = std::make_shared<const std::vector<std::size_t>>(
        unpatchify_index(config_.image_size, config_.patch_size));
    GraspParams reference = initialize(config_, 0, params_.frozen_seed);
    const auto expected = list_params(reference, config_.sdf_query_mod);
    const auto actual = list_params(params_, config_.sdf_query_mod);
    if (expected.size() != actual.size())
        throw IntegrityError("parameter set does not match the model config");
    for (std::size_t i = 0; i < expected.size(); ++i)
        if (expected[i].tensor->shape() != actual[i].tensor->shape())
            throw IntegrityError("parameter " + actual[i].name + " has shape " +
                                 shape_string(actual[i].tensor->shape()) + ", config expects " +
                                 shape_string(expected[i].tensor->shape()));
}

std::vector<ParamEntry> GraspModel::parameters() { return list_params(params_, config_.sdf_query_mod); }

std::vector<const Tensor*> GraspModel::trainable_tensors() const
{
    std::vector<const Tensor*> out;
    for (const auto& e : list_params(const_cast<GraspParams&>(params_), config_.sdf_query_mod))
        if (e.trainable)
            out.push_back(e.tensor);
    return out;
}

std::map<std::string, std::size_t> GraspModel::count_params() const
{
    std::map<std::string, std::size_t> counts;
    for (const auto& e : list_params(const_cast<GraspParams&>(params_), config_.sdf_query_mod))
        if (e.trainable)
            counts[e.group] += e.tensor->size();
    return counts;
}

std::size_t GraspModel::trainable_param_count() const
{
    std::size_t total = 0;
    for (const auto& [group, n] : count_params())
        total += n;
    return total;
}

std::size_t GraspModel::frozen_param_count() const
{
    std::size_t total = 0;
    for (const auto& e : list_params(const_cast<GraspParams&>(params_), config_.sdf_query_mod))
        if (e.group == "frozen_encoder")
            total += e.tensor->size();
    return total;
}

ParamVars GraspModel::bind(Tape& tape) const
{
    const GraspParams& p = params_;
    std::map<const Tensor*, Var> bound;
    auto v = [&](const Tensor& t) { return bound[&t] = tape.parameter(t); };
    ParamVars b;
    b.proj_w = v(p.proj_w);
    b.proj_b = v(p.proj_b);
    b.vm_w1 = v(p.vm_w1);
    b.vm_b1 = v(p.vm_b1);
    b.vm_w2 = v(p.vm_w2);
    b.vm_b2 = v(p.vm_b2);
    b.vm_attention = {v(p.vm_wq), v(p.vm_wk), v(p.vm_wv), v(p.vm_wo)};
    b.gamma = v(p.gamma);
    b.prototypes = v(p.prototypes);
    b.spm_attention = {v(p.spm_wq), v(p.spm_wk), v(p.spm_wv), v(p.spm_wo)};
    b.gate_alpha = v(p.gate_alpha);
    b.gate_beta = v(p.gate_beta);
    b.sdf_direction = config_.sdf_query_mod ? v(p.sdf_direction) : tape.constant(p.sdf_direction);
    b.trunk_w1 = v(p.trunk_w1);
    b.trunk_b1 = v(p.trunk_b1);
    b.trunk_w2 = v(p.trunk_w2);
    b.trunk_b2 = v(p.trunk_b2);
    b.occ_branch_w = v(p.occ_branch_w);
    b.occ_branch_b = v(p.occ_branch_b);
    b.amodal_branch_w = v(p.amodal_branch_w);
    b.amodal_branch_b = v(p.amodal_branch_b);
    b.fuse_w = v(p.fuse_w);
    b.fuse_b = v(p.fuse_b);
    b.occ_head_w = v(p.occ_head_w);
    b.occ_head_b = v(p.occ_head_b);
    b.amodal_head_w = v(p.amodal_head_w);
    b.amodal_head_b = v(p.amodal_head_b);
    for (const Tensor* t : trainable_tensors())
        b.trainable.push_back(bound.at(t));
    return b;
}

void GraspModel::check_image(std::size_t height, std::size_t width) const
{
    if (height != config_.image_size || width != config_.image_size)
        throw ConfigError("input is " + std::to_string(height) + "x" + std::to_string(width) + ", model expects " +
                          std::to_string(config_.image_size) + "x" + std::to_string(config_.image_size));
}

Tensor GraspModel::frozen_features(const GrayImage& image) const
{
    check_image(image.height, image.width);
    const std::size_t tokens = config_.tokens(), pp = config_.patch_pixels();
    const auto layout = patchify_index(config_.image_size, config_.patch_size);
    Tensor patches({tokens, pp});
    for (std::size_t i = 0; i < layout.size(); ++i)
        patches[i] = image.pixels[layout[i]] - 0.5;

    const std::size_t width = config_.frozen_width;
    Tensor out({tokens, kFrozenBlocks * width});
    Tensor h = patches;
    for (std::size_t b = 0; b < kFrozenBlocks; ++b) {
        Tensor next = matmul(h, params_.frozen_weights[b]);
        for (std::size_t t = 0; t < tokens; ++t)
            for (std::size_t c = 0; c < width; ++c) {
                double& x = next[t * width + c];
                x = std::tanh(x + params_.frozen_biases[b][c]);
                out[t * kFrozenBlocks * width + b * width + c] = x;
            }
        h = std::move(next);
    }
    return out;
}

Var GraspModel::encode(Tape& tape, const ParamVars& p, const GrayImage& image) const
{
    return linear(tape.constant(frozen_features(image)), p.proj_w, p.proj_b);
}

Var GraspModel::vm_tokens(Tape& tape, const ParamVars& p, const BinaryMask& v) const
{
    check_image(v.height(), v.width());
    const std::size_t grid = config_.grid();
    const auto occupancy = occupancy_grid(v, grid, grid);
    Tensor features({config_.tokens(), 3});
    for (std::size_t r = 0; r < grid; ++r)
        for (std::size_t c = 0; c < grid; ++c) {
            const std::size_t t = r * grid + c;
            features[t * 3 + 0] = occupancy[t];
            features[t * 3 + 1] = (static_cast<double>(r) + 0.5) / static_cast<double>(grid) * 2.0 - 1.0;
            features[t * 3 + 2] = (static_cast<double>(c) + 0.5) / static_cast<double>(grid) * 2.0 - 1.0;
        }
    Var hidden = relu(linear(tape.constant(std::move(features)), p.vm_w1, p.vm_b1));
    return linear(hidden, p.vm_w2, p.vm_b2);
}

Var GraspModel::vm_encode_fuse(Tape& tape, const ParamVars& p, Var tokens, const BinaryMask& v, Var* vm_out,
                               Tensor* attention) const
{
    Var vm = vm_tokens(tape, p, v);
    AttentionResult ca = multihead_cross_attention(tokens, vm, vm, p.vm_attention, config_.heads);
    if (vm_out)
        *vm_out = vm;
    if (attention)
        *attention = std::move(ca.weights);
    return add(tokens, mul(p.gamma, ca.output));
}

PriorOutput GraspModel::spm(Tape& tape, const ParamVars& p, Var fused, const std::vector<double>& sdf_tokens) const
{
    Var queries = fused;
    if (config_.sdf_query_mod) {
        Var depth = tape.constant(Tensor({sdf_tokens.size(), 1}, sdf_tokens));
        queries = add(fused, matmul(depth, reshape(p.sdf_direction, {1, config_.token_dim})));
    }
    AttentionResult ca = multihead_cross_attention(queries, p.prototypes, p.prototypes, p.spm_attention, config_.heads);
    PriorOutput out;
    out.prior = ca.output;
    out.residual = sub(ca.output, fused);
    out.attention = std::move(ca.weights);
    return out;
}

Var GraspModel::gate(Tape& tape, const ParamVars& p, const std::vector<double>& sdf_tokens) const
{
    if (config_.gate_override)
        return tape.constant(Tensor({sdf_tokens.size()}, *config_.gate_override));
    Var depth = tape.constant(Tensor({sdf_tokens.size()}, sdf_tokens));
    return sigmoid(add(mul(p.gate_alpha, depth), p.gate_beta));
}

Var inject(Var fused, Var prior, Var gate) { return lerp_rows(fused, prior, gate); }

std::vector<double> gate_values(const std::vector<double>& sdf_tokens, double alpha, double beta)
{
    std::vector<double> out(sdf_tokens.size());
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = 1.0 / (1.0 + std::exp(-(alpha * sdf_tokens[i] + beta)));
    return out;
}

DecoderOutput GraspModel::decode(Tape& tape, const ParamVars& p, Var injected) const
{
    Var trunk = relu(linear(injected, p.trunk_w1, p.trunk_b1));
    trunk = relu(linear(trunk, p.trunk_w2, p.trunk_b2));
    Var occ_features = relu(linear(trunk, p.occ_branch_w, p.occ_branch_b));
    Var amodal_features = relu(linear(trunk, p.amodal_branch_w, p.amodal_branch_b));
    return decode_heads(tape, p, occ_features, amodal_features);
}

DecoderOutput GraspModel::decode_heads(Tape&, const ParamVars& p, Var occ_features, Var amodal_features) const
{
    DecoderOutput out;
    out.occ_features = occ_features;
    out.amodal_features = amodal_features;
    // Occluded head sees only the occluded branch; the amodal head sees both.
    Var occ_tokens = linear(occ_features, p.occ_head_w, p.occ_head_b);
    Var fused = relu(linear(concat({amodal_features, occ_features}, 1), p.fuse_w, p.fuse_b));
    Var amodal_tokens = linear(fused, p.amodal_head_w, p.amodal_head_b);
    const Shape image_shape{config_.image_size, config_.image_size};
    out.logits_occ = gather(occ_tokens, unpatchify_index_, image_shape);
    out.logits_amodal = gather(amodal_tokens, unpatchify_index_, image_shape);
    return out;
}

std::vector<double> GraspModel::sdf_tokens(const BinaryMask& v) const
{
    check_image(v.height(), v.width());
    return pool_to_grid(sdf(v), config_.grid(), config_.grid());
}

ForwardTrace GraspModel::forward(Tape& tape, const ParamVars& p, const GrayImage& image, const BinaryMask& v) const
{
    ForwardTrace t;
    t.sdf_tokens = sdf_tokens(v);
    t.tokens = encode(tape, p, image);
    t.fused = vm_encode_fuse(tape, p, t.tokens, v, &t.vm_tokens, &t.vm_attention);
    PriorOutput prior = spm(tape, p, t.fused, t.sdf_tokens);
    t.prior = prior.prior;
    t.residual = prior.residual;
    t.spm_attention = std::move(prior.attention);
    t.gate = gate(tape, p, t.sdf_tokens);
    t.injected = inject(t.fused, t.prior, t.gate);
    DecoderOutput d = decode(tape, p, t.injected);
    t.occ_features = d.occ_features;
    t.amodal_features = d.amodal_features;
    t.logits_occ = d.logits_occ;
    t.logits_amodal = d.logits_amodal;
    return t;
}

// ---- checkpoints -------------------------------------------------------------

namespace {

void write_le(std::ostream& out, const Tensor& t)
{
    if constexpr (std::endian::native == std::endian::little) {
        out.write(reinterpret_cast<const char*>(t.values().data()), static_cast<std::streamsize>(t.size() * 8));
    } else {
        for (double v : t.values()) {
            auto bits = std::bit_cast<std::uint64_t>(v);
            char bytes[8];
            for (int i = 0; i < 8; ++i)
                bytes[i] = static_cast<char>((bits >> (8 * i)) & 0xff);
            out.write(bytes, 8);
        }
    }
}

void read_le(std::istream& in, Tensor& t, const std::string& file)
{
    std::vector<unsigned char> bytes(t.size() * 8);
    in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (in.gcount() != static_cast<std::streamsize>(bytes.size()))
        throw IoError("truncated checkpoint data in " + file);
    for (std::size_t i = 0; i < t.size(); ++i) {
        std::uint64_t bits = 0;
        for (int b = 0; b < 8; ++b)
            bits |= static_cast<std::uint64_t>(bytes[i * 8 + b]) << (8 * b);
        t[i] = std::bit_cast<double>(bits);
    }
}

} // namespace

void save_checkpoint(const std::filesystem::path& path, GraspModel& model, std::uint64_t init_seed, std::size_t step,
                     const json& metadata)
{
    const auto entries = model.parameters();
    json groups = json::array();
    for (const auto& e : entries) {
        if (groups.empty() || groups.back()["name"] != e.group)
            groups.push_back({{"name", e.group}, {"bytes", 0}, {"tensors", json::array()}});
        auto& g = groups.back();
        g["bytes"] = g["bytes"].get<std::size_t>() + e.tensor->size() * 8;
        g["tensors"].push_back({{"name", e.name}, {"shape", e.tensor->shape()}, {"trainable", e.trainable}});
    }
    json header{{"version", kCheckpointVersion},
                {"config", to_json(model.config())},
                {"init_seed", init_seed},
                {"frozen_seed", model.params().frozen_seed},
                {"step", step},
                {"byte_order", "little-endian float64"},
                {"metadata", metadata},
                {"groups", groups}};

    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw IoError("cannot write checkpoint " + path.string());
    out << header.dump() << '\n';
    for (const auto& e : entries)
        write_le(out, *e.tensor);
    if (!out)
        throw IoError("failed writing checkpoint " + path.string());
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw IoError("cannot open checkpoint " + path.string());
    std::string line;
    if (!std::getline(in, line))
        throw IoError("empty checkpoint " + path.string());
    json header;
    try {
        header = json::parse(line);
    } catch (const json::exception& e) {
        throw IoError("corrupt checkpoint header in " + path.string() + ": " + e.what());
    }
    if (header.value("version", "") != kCheckpointVersion)
        throw IntegrityError("unsupported checkpoint version in " + path.string());

    const GraspConfig config = grasp_config_from_json(header.at("config"));
    const auto frozen_seed = header.at("frozen_seed").get<std::uint64_t>();
    GraspModel model(config, 0, frozen_seed);
    auto entries = model.parameters();

    std::size_t k = 0;
    for (const auto& g : header.at("groups")) {
        std::size_t bytes = 0;
        for (const auto& jt : g.at("tensors")) {
            if (k >= entries.size() || entries[k].name != jt.at("name").get<std::string>() ||
                entries[k].tensor->shape() != jt.at("shape").get<Shape>())
                throw IntegrityError("checkpoint tensor layout does not match its config: " + path.string());
            bytes += entries[k].tensor->size() * 8;
            read_le(in, *entries[k].tensor, path.string());
            ++k;
        }
        if (bytes != g.at("bytes").get<std::size_t>())
            throw IntegrityError("group " + g.at("name").get<std::string>() + " byte length mismatch in " +
                                 path.string());
    }
    if (k != entries.size())
        throw IntegrityError("checkpoint is missing parameters: " + path.string());
    if (in.peek() != std::char_traits<char>::eof())
        throw IntegrityError("trailing bytes after checkpoint data in " + path.string());

    return {std::move(model), header.at("init_seed").get<std::uint64_t>(), header.at("step").get<std::size_t>(),
            header.value("metadata", json::object())};
}

} // namespace grasp
