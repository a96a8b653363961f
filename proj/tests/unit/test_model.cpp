#include "grasp/errors.hpp"
#include "grasp/model.hpp"
#include "grasp/training.hpp"

#include "../support/model_fixtures.hpp"
#include "../support/oracles.hpp"

#include <doctest.h>

#include <cmath>
#include <fstream>

using namespace grasp;
using namespace grasp::testing;

namespace {

struct Run
{
    Tape tape;
    ParamVars vars;
    ForwardTrace trace;

    Run(const GraspModel& model, const SceneInstance& inst, const BinaryMask& v)
        : vars(model.bind(tape)), trace(model.forward(tape, vars, *inst.image, v))
    {
    }
};

} // namespace

TEST_CASE("config validation")
{
    GraspConfig c;
    c.image_size = 60;
    CHECK_THROWS_AS(GraspModel{c}, ConfigError);
    GraspConfig d;
    d.heads = 3;
    CHECK_THROWS_AS(GraspModel{d}, ConfigError);
    GraspConfig e;
    e.prototypes = 0;
    CHECK_THROWS_AS(GraspModel{e}, ConfigError);

    GraspModel m(mini_config());
    Tape tape;
    const auto vars = m.bind(tape);
    CHECK_THROWS_AS(m.encode(tape, vars, GrayImage(8, 8)), ConfigError);
    CHECK_THROWS_AS(m.sdf_tokens(BinaryMask(8, 8)), ConfigError);
}

TEST_CASE("trace shape audit")
{
    GraspModel m(GraspConfig{}, 1);
    const auto scene = generate_scene(1, SceneConfig{});
    Run run(m, scene[0], scene[0].visible);
    const auto& t = run.trace;
    const Shape ld{64, 64};
    CHECK(t.tokens.shape() == ld);
    CHECK(t.vm_tokens.shape() == ld);
    CHECK(t.fused.shape() == ld);
    CHECK(t.prior.shape() == ld);
    CHECK(t.residual.shape() == ld);
    CHECK(t.injected.shape() == ld);
    CHECK(t.gate.value().size() == 64);
    CHECK(t.sdf_tokens.size() == 64);
    CHECK(t.logits_occ.shape() == Shape{64, 64});
    CHECK(t.logits_amodal.shape() == Shape{64, 64});
    CHECK(t.spm_attention.shape() == Shape{4, 64, 32});
    CHECK(t.vm_attention.shape() == Shape{4, 64, 64});
    for (double s : t.gate.value().values()) {
        CHECK(s > 0.0);
        CHECK(s < 1.0);
    }
}

TEST_CASE("encoder is deterministic and patch-local")
{
    GraspModel m(mini_config(), 2);
    randomize(m, 2);
    const auto inst = mini_instance(2);
    GrayImage swapped = *inst.image;
    // swap patch (0,0) with patch (0,1)
    for (std::size_t r = 0; r < 4; ++r)
        for (std::size_t c = 0; c < 4; ++c)
            std::swap(swapped.at(r, c), swapped.at(r, c + 4));
    Tape tape;
    const auto vars = m.bind(tape);
    const Tensor a = m.encode(tape, vars, *inst.image).value();
    const Tensor b = m.encode(tape, vars, *inst.image).value();
    const Tensor s = m.encode(tape, vars, swapped).value();
    CHECK(bit_equal(a, b));
    const std::size_t d = m.config().token_dim;
    for (std::size_t j = 0; j < d; ++j) {
        CHECK(s.at(0, j) == a.at(1, j));
        CHECK(s.at(1, j) == a.at(0, j));
        CHECK(s.at(5, j) == a.at(5, j));
    }
}

TEST_CASE("a training step moves the projection but never the frozen blocks")
{
    GraspModel m(mini_config(), 3);
    const GraspParams before = m.params();
    std::vector<SceneInstance> data;
    for (std::uint64_t s = 0; s < 4; ++s)
        data.push_back(mini_instance(s));
    TrainConfig tc;
    tc.steps = 1;
    tc.batch_size = 2;
    tc.lr = 1e-2;
    train(m, data, tc);
    for (std::size_t b = 0; b < kFrozenBlocks; ++b) {
        CHECK(bit_equal(m.params().frozen_weights[b], before.frozen_weights[b]));
        CHECK(bit_equal(m.params().frozen_biases[b], before.frozen_biases[b]));
    }
    CHECK_FALSE(bit_equal(m.params().proj_w, before.proj_w));
    // disabled SDF direction stays untouched
    CHECK(bit_equal(m.params().sdf_direction, before.sdf_direction));
}

TEST_CASE("zero gamma makes the fusion an identity")
{
    GraspModel m(mini_config(), 4);
    const auto inst = mini_instance(4);
    Run run(m, inst, inst.visible);
    CHECK(bit_equal(run.trace.fused.value(), run.trace.tokens.value()));
}

TEST_CASE("single-token fusion matches a dense recomputation")
{
    GraspConfig c = mini_config();
    c.image_size = c.patch_size = 4;  // L = 1: the cross-attention has one key
    GraspModel m(c, 5);
    randomize(m, 5);
    m.params().gamma[0] = 1.0;
    GrayImage img(4, 4, 0.3);
    BinaryMask v(4, 4);
    v.set(1, 2);
    Tape tape;
    const auto vars = m.bind(tape);
    Var f = m.encode(tape, vars, img);
    Var fv;
    Var fused = m.vm_encode_fuse(tape, vars, f, v, &fv);
    const Tensor expect = matmul(matmul(fv.value(), m.params().vm_wv), m.params().vm_wo);
    for (std::size_t j = 0; j < c.token_dim; ++j)
        CHECK(fused.value().at(0, j) == doctest::Approx(f.value().at(0, j) + expect.at(0, j)).epsilon(1e-13));
}

TEST_CASE("d sum(F') / d gamma equals the sum of the cross-attention output")
{
    GraspModel m(mini_config(), 6);
    randomize(m, 6);
    const auto inst = mini_instance(6);
    Tape tape;
    const auto vars = m.bind(tape);
    Var f = m.encode(tape, vars, *inst.image);
    Var fused = m.vm_encode_fuse(tape, vars, f, inst.visible);
    tape.backward(sum(fused));
    const double analytic = tape.grad(vars.gamma).item();

    // cross-attention output = (F' - F) / gamma
    double ca = 0.0;
    for (std::size_t i = 0; i < fused.value().size(); ++i)
        ca += (fused.value()[i] - f.value()[i]);
    ca /= m.params().gamma[0];
    CHECK(analytic == doctest::Approx(ca).epsilon(1e-9));

    auto sum_fused = [&](double g) {
        GraspModel copy = m;
        copy.params().gamma[0] = g;
        Tape t;
        const auto v = copy.bind(t);
        return sum(copy.vm_encode_fuse(t, v, copy.encode(t, v, *inst.image), inst.visible)).value().item();
    };
    const double g0 = m.params().gamma[0], h = 1e-5;
    const double numeric = (sum_fused(g0 + h) - sum_fused(g0 - h)) / (2 * h);
    CHECK(relative_error(analytic, numeric) < 1e-6);
}

TEST_CASE("prototype memory")
{
    GraspConfig c = mini_config();
    c.prototypes = 1;
    GraspModel one(c, 7);
    randomize(one, 7);
    const auto inst = mini_instance(7);
    Run run(one, inst, inst.visible);
    for (double a : run.trace.spm_attention.values())
        CHECK(a == 1.0);
    const Tensor& h = run.trace.prior.value();
    for (std::size_t i = 1; i < h.dim(0); ++i)
        for (std::size_t j = 0; j < h.dim(1); ++j)
            REQUIRE(h.at(i, j) == h.at(0, j));

    // soft attention: strictly positive entropy and mass on every prototype
    for (std::uint64_t s = 0; s < 100; ++s) {
        GraspModel m(mini_config(), s);
        randomize(m, s);
        const auto x = mini_instance(s % 7);
        Run r(m, x, x.visible);
        const Tensor& a = r.trace.spm_attention;
        const std::size_t P = a.dim(2);
        for (std::size_t row = 0; row < a.dim(0) * a.dim(1); ++row) {
            double entropy = 0.0, total = 0.0;
            for (std::size_t k = 0; k < P; ++k) {
                const double p = a[row * P + k];
                REQUIRE(p > 0.0);
                entropy -= p * std::log(p);
                total += p;
            }
            REQUIRE(entropy > 0.0);
            REQUIRE(std::abs(total - 1.0) < 1e-12);
        }
    }
}

TEST_CASE("residual is prior minus fused")
{
    GraspModel m(mini_config(), 8);
    randomize(m, 8);
    const auto inst = mini_instance(8);
    Run run(m, inst, inst.visible);
    const auto& t = run.trace;
    for (std::size_t i = 0; i < t.residual.value().size(); ++i)
        REQUIRE(t.residual.value()[i] == t.prior.value()[i] - t.fused.value()[i]);
}

TEST_CASE("gate values")
{
    const auto g = gate_values({-1.0, 0.0, 1.0}, 2.68, 0.26);
    auto logistic = [](double z) { return 1.0 / (1.0 + std::exp(-z)); };
    CHECK(std::abs(g[0] - 0.0817) < 5e-4);
    CHECK(std::abs(g[1] - 0.5646) < 5e-4);
    CHECK(g[0] == doctest::Approx(logistic(-2.42)).epsilon(1e-15));
    CHECK(g[1] == doctest::Approx(logistic(0.26)).epsilon(1e-15));
    CHECK(g[2] == doctest::Approx(logistic(2.94)).epsilon(1e-15));
    for (double s : gate_values({-0.7, 0.1, 0.9}, 0.0, 0.0))
        CHECK(s == 0.5);

    // the model's gate agrees with the plain formula and is differentiable in alpha, beta
    GraspModel m(mini_config(), 9);
    m.params().gate_alpha[0] = 2.68;
    m.params().gate_beta[0] = 0.26;
    const std::vector<double> d{-1.0, -0.2, 0.0, 0.4, 1.0};
    Tape tape;
    const auto vars = m.bind(tape);
    Var s = m.gate(tape, vars, d);
    const auto plain = gate_values(d, 2.68, 0.26);
    for (std::size_t i = 0; i < d.size(); ++i)
        CHECK(s.value()[i] == doctest::Approx(plain[i]).epsilon(1e-15));
    tape.backward(sum(s));
    double ga = 0.0, gb = 0.0;
    for (std::size_t i = 0; i < d.size(); ++i) {
        ga += plain[i] * (1 - plain[i]) * d[i];
        gb += plain[i] * (1 - plain[i]);
    }
    CHECK(tape.grad(vars.gate_alpha).item() == doctest::Approx(ga).epsilon(1e-12));
    CHECK(tape.grad(vars.gate_beta).item() == doctest::Approx(gb).epsilon(1e-12));
}

TEST_CASE("inject identities")
{
    Rng rng(10);
    Tape tape;
    Var f = tape.constant(random_tensor({6, 4}, rng));
    Var h = tape.constant(random_tensor({6, 4}, rng));
    CHECK(bit_equal(inject(f, h, tape.constant(Tensor({6}, 0.0))).value(), f.value()));
    CHECK(bit_equal(inject(f, h, tape.constant(Tensor({6}, 1.0))).value(), h.value()));
    const Tensor half = inject(f, h, tape.constant(Tensor({6}, 0.5))).value();
    for (std::size_t i = 0; i < half.size(); ++i)
        CHECK(half[i] == doctest::Approx((f.value()[i] + h.value()[i]) / 2).epsilon(1e-15));

    GraspConfig c = mini_config();
    c.gate_override = 1.0;
    GraspModel m(c, 11);
    randomize(m, 11);
    const auto inst = mini_instance(11);
    Run run(m, inst, inst.visible);
    CHECK(bit_equal(run.trace.injected.value(), run.trace.prior.value()));
    m.config().gate_override = 0.0;
    Run zero(m, inst, inst.visible);
    CHECK(bit_equal(zero.trace.injected.value(), zero.trace.fused.value()));
}

TEST_CASE("decoder flow is unidirectional")
{
    GraspModel m(mini_config(), 12);
    randomize(m, 12);
    const auto inst = mini_instance(12);
    Run run(m, inst, inst.visible);
    auto& tape = run.tape;
    const auto& t = run.trace;

    Var zero_fo = tape.constant(Tensor::zeros_like(t.occ_features.value()));
    Var zero_fa = tape.constant(Tensor::zeros_like(t.amodal_features.value()));
    const DecoderOutput no_fo = m.decode_heads(tape, run.vars, zero_fo, t.amodal_features);
    const DecoderOutput no_fa = m.decode_heads(tape, run.vars, t.occ_features, zero_fa);
    CHECK_FALSE(bit_equal(no_fo.logits_amodal.value(), t.logits_amodal.value()));
    CHECK(bit_equal(no_fa.logits_occ.value(), t.logits_occ.value()));

    // occluded loss has exactly zero gradient w.r.t. amodal-branch parameters
    const BinaryMask occ_gt = mask_diff(inst.amodal, inst.visible);
    tape.backward(add(bce(t.logits_occ, occ_gt), dice(t.logits_occ, occ_gt)));
    for (Var v : {run.vars.amodal_branch_w, run.vars.amodal_branch_b, run.vars.fuse_w, run.vars.fuse_b,
                  run.vars.amodal_head_w, run.vars.amodal_head_b})
        for (double g : tape.grad(v).values())
            REQUIRE(g == 0.0);
    double occ_branch = 0.0;
    for (double g : tape.grad(run.vars.occ_branch_w).values())
        occ_branch += std::abs(g);
    CHECK(occ_branch > 0.0);
}

TEST_CASE("zero input tokens decode to a fixed per-token pattern")
{
    GraspModel m(mini_config(), 13);
    randomize(m, 13);
    Tape tape;
    const auto vars = m.bind(tape);
    const auto a = m.decode(tape, vars, tape.constant(Tensor({16, 8})));
    const auto b = m.decode(tape, vars, tape.constant(Tensor({16, 8})));
    CHECK(bit_equal(a.logits_amodal.value(), b.logits_amodal.value()));
    // every 4x4 patch carries the same logits
    const Tensor& l = a.logits_occ.value();
    for (std::size_t r = 0; r < 16; ++r)
        for (std::size_t c = 0; c < 16; ++c)
            REQUIRE(l.at(r, c) == l.at(r % 4, c % 4));
}

TEST_CASE("with gamma = 0 and the gate closed, logits ignore the prototypes")
{
    GraspConfig c = mini_config();
    c.gate_override = 0.0;
    GraspModel m(c, 14);
    randomize(m, 14);
    m.params().gamma[0] = 0.0;
    const auto inst = mini_instance(14);
    Run a(m, inst, inst.visible);
    Rng rng(99);
    for (double& x : m.params().prototypes.values())
        x = rng.normal();
    for (double& x : m.params().spm_wv.values())
        x = rng.normal();
    Run b(m, inst, inst.visible);
    CHECK(bit_equal(a.trace.logits_amodal.value(), b.trace.logits_amodal.value()));
    CHECK(bit_equal(a.trace.logits_occ.value(), b.trace.logits_occ.value()));
}

TEST_CASE("initialization contracts")
{
    GraspModel m(GraspConfig{}, 15);
    CHECK(m.params().gamma.item() == 0.0);
    for (double x : m.params().sdf_direction.values())
        CHECK(x == 0.0);

    const auto scene = generate_scene(15, SceneConfig{});
    const auto& inst = scene[0];
    Run base(m, inst, inst.visible);
    Run other(m, inst, perturb_vm(inst.visible, 3).complement());
    CHECK(bit_equal(base.trace.logits_amodal.value(), other.trace.logits_amodal.value()));
    CHECK(bit_equal(base.trace.logits_occ.value(), other.trace.logits_occ.value()));

    GraspConfig mod;
    mod.sdf_query_mod = true;
    GraspModel m2(mod, 15);
    Run with_mod(m2, inst, inst.visible);
    CHECK(bit_equal(base.trace.logits_amodal.value(), with_mod.trace.logits_amodal.value()));
    CHECK(bit_equal(base.trace.logits_occ.value(), with_mod.trace.logits_occ.value()));
}

TEST_CASE("parameter accounting")
{
    GraspModel m(GraspConfig{}, 16);
    const auto counts = m.count_params();
    CHECK(counts.at("gate") == 2);
    CHECK(counts.at("prototypes") == 32 * 64);
    CHECK(counts.count("frozen_encoder") == 0);
    CHECK(counts.count("sdf_direction") == 0);
    CHECK(m.frozen_param_count() == 64 * 64 + 64 + 3 * (64 * 64 + 64));
    std::size_t total = 0;
    for (const auto& [g, n] : counts)
        total += n;
    CHECK(m.trainable_param_count() == total);

    GraspConfig mod;
    mod.sdf_query_mod = true;
    CHECK(GraspModel(mod).count_params().at("sdf_direction") == 64);
}

TEST_CASE("miniature model gradient check")
{
    for (std::uint64_t s = 0; s < 4; ++s) {
        GraspConfig c = mini_config();
        c.sdf_query_mod = s % 2 == 1;
        GraspModel m(c, s);
        randomize(m, s);
        const auto inst = mini_instance(s);
        const auto r = model_gradcheck(m, inst, s % 3 == 0 ? perturb_vm(inst.visible, s) : inst.visible);
        INFO("seed " << s << " worst " << r.worst);
        CHECK(r.max_rel < 1e-4);
    }
}

TEST_CASE("checkpoint round trip and corruption")
{
    const auto dir = scratch_dir("checkpoint");
    GraspConfig c = mini_config();
    c.sdf_query_mod = true;
    GraspModel m(c, 17);
    randomize(m, 17);
    save_checkpoint(dir / "a.ckpt", m, 17, 123, {{"note", "x"}});
    const LoadedCheckpoint back = load_checkpoint(dir / "a.ckpt");
    CHECK(back.init_seed == 17);
    CHECK(back.step == 123);
    CHECK(back.metadata["note"] == "x");
    CHECK(back.model.config().sdf_query_mod);
    auto original = m.parameters();
    GraspModel loaded = back.model;
    auto restored = loaded.parameters();
    REQUIRE(original.size() == restored.size());
    for (std::size_t i = 0; i < original.size(); ++i)
        CHECK(bit_equal(*original[i].tensor, *restored[i].tensor));

    save_checkpoint(dir / "b.ckpt", loaded, 17, 123, {{"note", "x"}});
    CHECK(read_file(dir / "a.ckpt") == read_file(dir / "b.ckpt"));

    const std::string bytes = read_file(dir / "a.ckpt");
    std::ofstream(dir / "trunc.ckpt", std::ios::binary) << bytes.substr(0, bytes.size() - 8);
    CHECK_THROWS_AS(load_checkpoint(dir / "trunc.ckpt"), IoError);
    std::ofstream(dir / "tail.ckpt", std::ios::binary) << bytes << "x";
    CHECK_THROWS_AS(load_checkpoint(dir / "tail.ckpt"), IntegrityError);
    std::ofstream(dir / "hdr.ckpt", std::ios::binary) << "{broken\n";
    CHECK_THROWS_AS(load_checkpoint(dir / "hdr.ckpt"), IoError);
    CHECK_THROWS_AS(load_checkpoint(dir / "none.ckpt"), IoError);
}
