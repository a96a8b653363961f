#include "grasp/training.hpp"

#include "grasp/errors.hpp"
#include "grasp/parallel.hpp"
#include "grasp/rng.hpp"
#include "grasp/version.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

namespace grasp {

using nlohmann::json;

namespace {

Tensor mask_tensor(const BinaryMask& mask)
{
    Tensor t({mask.height(), mask.width()});
    for (std::size_t i = 0; i < mask.size(); ++i)
        t[i] = mask[i] ? 1.0 : 0.0;
    return t;
}

void require_matching(Var logits, const BinaryMask& target, const char* op)
{
    const Shape& s = logits.shape();
    if (s.size() != 2 || s[0] != target.height() || s[1] != target.width())
        throw DimensionError(std::string(op) + ": logits " + shape_string(s) + " vs target " +
                             std::to_string(target.height()) + "x" + std::to_string(target.width()));
}

} // namespace

Var bce(Var logits, const BinaryMask& target)
{
    require_matching(logits, target, "bce");
    Var t = logits.tape->constant(mask_tensor(target));
    // softplus(x) - t x == -[t log sigmoid(x) + (1 - t) log(1 - sigmoid(x))]
    return mean(sub(softplus(logits), mul(t, logits)));
}

Var dice(Var logits, const BinaryMask& target, double eps)
{
    require_matching(logits, target, "dice");
    Tape& tape = *logits.tape;
    Var g = tape.constant(mask_tensor(target));
    Var p = sigmoid(logits);
    Var numerator = add_constant(scale(sum(mul(p, g)), 2.0), eps);
    Var denominator = add_constant(add(sum(p), tape.constant(Tensor::scalar(static_cast<double>(target.count())))), eps);
    return add_constant(scale(div(numerator, denominator), -1.0), 1.0);
}

LossTerms total_loss(const ForwardTrace& trace, const BinaryMask& amodal_gt, const BinaryMask& visible_gt,
                     double occluded_weight)
{
    if (!is_subset(visible_gt, amodal_gt))
        throw IntegrityError("ground-truth visible mask is not contained in the amodal mask");
    const BinaryMask occluded_gt = mask_diff(amodal_gt, visible_gt);

    Var bce_a = bce(trace.logits_amodal, amodal_gt);
    Var dice_a = dice(trace.logits_amodal, amodal_gt);
    Var bce_o = bce(trace.logits_occ, occluded_gt);
    Var dice_o = dice(trace.logits_occ, occluded_gt);
    Var amodal = add(bce_a, dice_a);
    Var occluded = scale(add(bce_o, dice_o), occluded_weight);

    LossTerms terms;
    terms.total = add(amodal, occluded);
    auto& v = terms.values;
    v.bce_amodal = bce_a.value().item();
    v.dice_amodal = dice_a.value().item();
    v.bce_occ = bce_o.value().item();
    v.dice_occ = dice_o.value().item();
    v.amodal = amodal.value().item();
    v.occluded = occluded.value().item();
    v.total = terms.total.value().item();
    return terms;
}

// ---- config ------------------------------------------------------------------

void TrainConfig::validate() const
{
    if (!(lr > 0.0))
        throw ConfigError("learning rate must be positive");
    if (steps == 0)
        throw ConfigError("training needs at least one step");
    if (batch_size == 0)
        throw ConfigError("batch size must be positive");
    if (noise_probability < 0.0 || noise_probability > 1.0)
        throw ConfigError("noise probability must lie in [0, 1]");
}

json to_json(const TrainConfig& c)
{
    return {{"lr", c.lr},
            {"batch_size", c.batch_size},
            {"steps", c.steps},
            {"seed", c.seed},
            {"noise_probability", c.noise_probability},
            {"beta1", c.beta1},
            {"beta2", c.beta2},
            {"eps", c.eps},
            {"weight_decay", c.weight_decay},
            {"occluded_weight", c.occluded_weight},
            {"checkpoint_every", c.checkpoint_every}};
}

TrainConfig train_config_from_json(const json& j, TrainConfig c)
{
    try {
        c.lr = j.value("lr", c.lr);
        c.batch_size = j.value("batch_size", c.batch_size);
        c.steps = j.value("steps", c.steps);
        c.seed = j.value("seed", c.seed);
        c.noise_probability = j.value("noise_probability", c.noise_probability);
        c.beta1 = j.value("beta1", c.beta1);
        c.beta2 = j.value("beta2", c.beta2);
        c.eps = j.value("eps", c.eps);
        c.weight_decay = j.value("weight_decay", c.weight_decay);
        c.occluded_weight = j.value("occluded_weight", c.occluded_weight);
        c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("train config: ") + e.what());
    }
    c.validate();
    return c;
}

// ---- optimizer -----------------------------------------------------------------

double cosine_lr(double lr0, std::size_t step, std::size_t total)
{
    if (step >= total)
        return 0.0;
    return lr0 * 0.5 * (1.0 + std::cos(std::numbers::pi * static_cast<double>(step) / static_cast<double>(total)));
}

AdamW::AdamW(double beta1, double beta2, double eps, double weight_decay)
    : beta1_(beta1), beta2_(beta2), eps_(eps), weight_decay_(weight_decay)
{
}

void AdamW::step(const std::vector<Tensor*>& params, const std::vector<Tensor>& grads, double lr)
{
    if (params.size() != grads.size())
        throw DimensionError("optimizer: parameter and gradient counts differ");
    if (m_.empty()) {
        for (const Tensor* p : params) {
            m_.push_back(Tensor::zeros_like(*p));
            v_.push_back(Tensor::zeros_like(*p));
        }
    }
    if (m_.size() != params.size())
        throw DimensionError("optimizer: parameter set changed between steps");
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t k = 0; k < params.size(); ++k) {
        Tensor& p = *params[k];
        const Tensor& g = grads[k];
        if (g.shape() != p.shape())
            throw DimensionError("optimizer: gradient shape " + shape_string(g.shape()) + " vs parameter " +
                                 shape_string(p.shape()));
        Tensor& m = m_[k];
        Tensor& v = v_[k];
        for (std::size_t i = 0; i < p.size(); ++i) {
            m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
            v[i] = beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i];
            const double update = (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
            p[i] -= lr * (update + weight_decay_ * p[i]);
        }
    }
}

// ---- training loop -------------------------------------------------------------

BatchResult batch_gradients(const GraspModel& model, const std::vector<const SceneInstance*>& batch,
                            const std::vector<BinaryMask>& inputs, double occluded_weight)
{
    if (batch.empty() || batch.size() != inputs.size())
        throw DimensionError("batch and input mask counts differ or are zero");
    const double share = 1.0 / static_cast<double>(batch.size());

    std::vector<LossBreakdown> losses(batch.size());
    std::vector<std::vector<Tensor>> grads(batch.size());
    parallel_for(batch.size(), [&](std::size_t b) {
        Tape tape;
        const ParamVars vars = model.bind(tape);
        const ForwardTrace trace = model.forward(tape, vars, *batch[b]->image, inputs[b]);
        const LossTerms loss = total_loss(trace, batch[b]->amodal, batch[b]->visible, occluded_weight);
        losses[b] = loss.values;
        tape.backward(scale(loss.total, share));
        std::vector<Tensor> g;
        g.reserve(vars.trainable.size());
        for (Var v : vars.trainable)
            g.push_back(tape.grad(v));
        grads[b] = std::move(g);
    });

    BatchResult result;
    result.grads = std::move(grads[0]);
    for (std::size_t b = 1; b < batch.size(); ++b)
        for (std::size_t k = 0; k < result.grads.size(); ++k)
            for (std::size_t i = 0; i < result.grads[k].size(); ++i)
                result.grads[k][i] += grads[b][k][i];
    for (const auto& l : losses) {
        result.mean.bce_amodal += l.bce_amodal * share;
        result.mean.dice_amodal += l.dice_amodal * share;
        result.mean.bce_occ += l.bce_occ * share;
        result.mean.dice_occ += l.dice_occ * share;
        result.mean.amodal += l.amodal * share;
        result.mean.occluded += l.occluded * share;
        result.mean.total += l.total * share;
    }
    return result;
}

namespace {

std::string describe(const LossBreakdown& l)
{
    std::ostringstream out;
    out << "bce_amodal=" << l.bce_amodal << " dice_amodal=" << l.dice_amodal << " bce_occ=" << l.bce_occ
        << " dice_occ=" << l.dice_occ << " total=" << l.total;
    return out.str();
}

std::filesystem::path periodic_path(const std::filesystem::path& base, std::size_t step)
{
    auto p = base;
    p += ".step" + std::to_string(step);
    return p;
}

} // namespace

TrainResult train(GraspModel& model, const std::vector<SceneInstance>& data, const TrainConfig& config,
                  const TrainOutputs& outputs)
{
    config.validate();
    if (data.empty())
        throw ConfigError("training split is empty");

    std::vector<Tensor*> trainable;
    for (const auto& e : model.parameters())
        if (e.trainable)
            trainable.push_back(e.tensor);
    AdamW optimizer(config.beta1, config.beta2, config.eps, config.weight_decay);

    std::vector<std::size_t> order(data.size());
    std::size_t cursor = data.size();
    std::size_t epoch = 0;
    auto next_index = [&] {
        if (cursor == order.size()) {
            for (std::size_t i = 0; i < order.size(); ++i)
                order[i] = i;
            Rng rng(derive_seed(config.seed, "batch", epoch++));
            for (std::size_t i = order.size(); i-- > 1;)
                std::swap(order[i], order[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i)))]);
            cursor = 0;
        }
        return order[cursor++];
    };

    TrainResult result;
    for (std::size_t step = 0; step < config.steps; ++step) {
        std::vector<const SceneInstance*> batch;
        std::vector<BinaryMask> inputs;
        for (std::size_t slot = 0; slot < config.batch_size; ++slot) {
            const SceneInstance& inst = data[next_index()];
            batch.push_back(&inst);
            inputs.push_back(training_vm(inst, derive_seed(config.seed, "noise", step, slot), config.noise_probability));
        }

        BatchResult br = batch_gradients(model, batch, inputs, config.occluded_weight);
        if (!std::isfinite(br.mean.total))
            throw NumericError("non-finite loss at step " + std::to_string(step) + ": " + describe(br.mean));

        const double lr = cosine_lr(config.lr, step, config.steps);
        optimizer.step(trainable, br.grads, lr);

        LossRecord record{step, lr, br.mean};
        result.curve.push_back(record);
        if (outputs.on_step)
            outputs.on_step(record);
        if (!outputs.checkpoint.empty() && config.checkpoint_every > 0 && (step + 1) % config.checkpoint_every == 0 &&
            step + 1 < config.steps)
            save_checkpoint(periodic_path(outputs.checkpoint, step + 1), model, outputs.init_seed, step + 1,
                            {{"run_config", outputs.run_config}, {"version", kVersion}});
    }

    if (!outputs.checkpoint.empty())
        save_checkpoint(outputs.checkpoint, model, outputs.init_seed, config.steps,
                        {{"run_config", outputs.run_config}, {"version", kVersion}});
    if (!outputs.loss_csv.empty())
        write_loss_csv(outputs.loss_csv, result.curve, outputs.run_config);
    return result;
}

void write_loss_csv(const std::filesystem::path& path, const std::vector<LossRecord>& curve, const json& run_config)
{
    std::ofstream out(path);
    if (!out)
        throw IoError("cannot write " + path.string());
    out << "# " << kVersion << " run_config=" << run_config.dump() << '\n';
    out << "step,lr,bce_amodal,dice_amodal,bce_occ,dice_occ,L_amodal,L_occluded,L_total\n";
    out.precision(17);
    for (const auto& r : curve)
        out << r.step << ',' << r.lr << ',' << r.loss.bce_amodal << ',' << r.loss.dice_amodal << ',' << r.loss.bce_occ
            << ',' << r.loss.dice_occ << ',' << r.loss.amodal << ',' << r.loss.occluded << ',' << r.loss.total << '\n';
}

} // namespace grasp
