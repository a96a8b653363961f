#include "grasp/cli.hpp"
#include "grasp/dataset.hpp"
#include "grasp/errors.hpp"
#include "grasp/evalkit.hpp"
#include "grasp/geometry.hpp"
#include "grasp/model.hpp"
#include "grasp/probe.hpp"
#include "grasp/training.hpp"

#include "../support/model_fixtures.hpp"
#include "../support/op_cases.hpp"
#include "../support/oracles.hpp"
#include "../support/ridge_oracle.hpp"

#include <chrono>
#include <cmath>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

using namespace grasp;
using namespace grasp::testing;
namespace fs = std::filesystem;

namespace {

struct Outcome
{
    bool pass = true;
    std::ostringstream detail;

    void require(bool ok, const std::string& what)
    {
        if (!ok) {
            pass = false;
            detail << "[failed: " << what << "] ";
        }
    }
};

using Check = std::function<void(Outcome&)>;

double seconds_since(std::chrono::steady_clock::time_point t0)
{
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

class TablePredictor : public Predictor
{
public:
    std::map<std::size_t, Prediction> table;
    Prediction predict(const SceneInstance& inst, const BinaryMask&) const override { return table.at(inst.id); }
};

BinaryMask pixels(std::size_t n, std::initializer_list<std::pair<int, int>> on)
{
    BinaryMask m(n, n);
    for (auto [r, c] : on)
        m.set(r, c);
    return m;
}

SceneInstance handmade(std::size_t id, BinaryMask amodal, BinaryMask visible)
{
    SceneInstance inst;
    inst.image = std::make_shared<GrayImage>(amodal.height(), amodal.width());
    inst.occluded = mask_diff(amodal, visible);
    inst.occ_ratio = double(inst.occluded.count()) / double(amodal.count());
    inst.amodal = std::move(amodal);
    inst.visible = std::move(visible);
    inst.id = id;
    return inst;
}

std::vector<SceneInstance> default_instances(std::uint64_t seed, std::size_t scenes)
{
    return make_dataset(seed, scenes, SceneConfig{}).instances;
}

void gate_anchor(Outcome& o)
{
    const auto g = gate_values({-1.0, 0.0, 1.0}, 2.68, 0.26);
    const double expected[3] = {0.0817, 0.5646, 0.9505};
    o.detail << std::setprecision(6) << "gate(-1,0,+1) = " << g[0] << ", " << g[1] << ", " << g[2]
             << " vs 0.0817, 0.5646, 0.9505 (tol 5e-4); ";
    for (int i = 0; i < 3; ++i)
        o.require(std::abs(g[i] - expected[i]) < 5e-4, "d = " + std::to_string(i - 1));
}

void sdf_oracle(Outcome& o)
{
    const auto t0 = std::chrono::steady_clock::now();
    Rng rng(derive_seed(2, "acceptance"));
    std::size_t checked = 0;
    for (int k = 0; k < 100; ++k) {
        const BinaryMask m = k % 2 ? random_mask(32, 32, rng.uniform(0.02, 0.9), rng) : random_blob(32, 32, rng);
        const auto fast = edt(m);
        const auto slow = brute_force_squared(m);
        for (std::size_t i = 0; i < m.size(); ++i)
            if (slow[i] >= 0 && fast.squared[i] != slow[i]) {
                o.require(false, "edt mask " + std::to_string(k));
                break;
            }
        if (m.none() || m.complement().none())
            continue;
        const auto a = sdf(m), b = sdf(m.complement());
        for (std::size_t i = 0; i < m.size(); ++i)
            if (a.values[i] != -b.values[i] || (a.values[i] > 0) == m[i]) {
                o.require(false, "antisymmetry mask " + std::to_string(k));
                break;
            }
        ++checked;
    }
    const double t = seconds_since(t0);
    o.require(t < 10.0, "runtime");
    o.detail << "100 masks exact, antisymmetry on " << checked << "; " << std::setprecision(3) << t << " s";
}

void gradient_suite(Outcome& o)
{
    const auto t0 = std::chrono::steady_clock::now();
    std::string worst_op;
    const double op_err = worst_op_error(50, &worst_op);
    double model_err = 0.0;
    for (std::uint64_t s = 0; s < 50; ++s) {
        GraspConfig c = mini_config();
        c.sdf_query_mod = s % 2 == 1;
        GraspModel m(c, s);
        randomize(m, s);
        const auto inst = mini_instance(s);
        const BinaryMask v = s % 3 == 0 ? perturb_vm(inst.visible, s) : inst.visible;
        model_err = std::max(model_err, model_gradcheck(m, inst, v).max_rel);
    }
    const double t = seconds_since(t0);
    o.require(op_err < 1e-4, "op gradients (" + worst_op + ")");
    o.require(model_err < 1e-4, "model gradients");
    o.require(t < 60.0, "runtime");
    o.detail << std::setprecision(3) << op_cases().size() << " ops x 50 seeds max rel " << op_err
             << "; mini model x 50 seeds max rel " << model_err << "; " << t << " s";
}

void gate_identities(Outcome& o)
{
    std::size_t compared = 0;
    for (std::uint64_t s = 0; s < 10; ++s) {
        GraspModel m(mini_config(), s);
        randomize(m, s);
        const auto inst = mini_instance(s);
        for (double c : {0.0, 1.0}) {
            const Prediction p = predict(with_gate_override(m, c), *inst.image, inst.visible);
            Tape tape;
            const ParamVars vars = m.bind(tape);
            const ForwardTrace t = m.forward(tape, vars, *inst.image, inst.visible);
            const DecoderOutput forced = m.decode(tape, vars, c == 1.0 ? t.prior : t.fused);
            o.require(bit_equal(p.logits_amodal, forced.logits_amodal.value()) &&
                          bit_equal(p.logits_occ, forced.logits_occ.value()) &&
                          p.amodal == threshold_logits(forced.logits_amodal.value()) &&
                          p.occluded == threshold_logits(forced.logits_occ.value()),
                      "seed " + std::to_string(s) + " override " + std::to_string(c));
            ++compared;
        }
    }
    o.detail << compared << " override runs bit-identical to decoding H (s=1) or F' (s=0)";
}

void structural_asymmetry(Outcome& o)
{
    std::size_t zeros = 0;
    double max_change = 0.0;
    for (std::uint64_t s = 0; s < 10; ++s) {
        GraspModel m(mini_config(), s);
        randomize(m, s);
        const auto inst = mini_instance(s);
        Tape tape;
        const ParamVars vars = m.bind(tape);
        const ForwardTrace t = m.forward(tape, vars, *inst.image, inst.visible);
        const BinaryMask occ = mask_diff(inst.amodal, inst.visible);
        tape.backward(add(bce(t.logits_occ, occ), dice(t.logits_occ, occ)));
        for (Var v : {vars.amodal_branch_w, vars.amodal_branch_b, vars.fuse_w, vars.fuse_b, vars.amodal_head_w,
                      vars.amodal_head_b})
            for (double g : tape.grad(v).values()) {
                o.require(g == 0.0, "nonzero amodal-branch gradient");
                ++zeros;
            }
        Rng rng(s);
        const Var perturbed = tape.constant(add(t.occ_features, tape.constant(random_tensor(
                                                                    t.occ_features.value().shape(), rng))).value());
        const DecoderOutput d = m.decode_heads(tape, vars, perturbed, t.amodal_features);
        double change = 0.0;
        for (std::size_t i = 0; i < d.logits_amodal.value().size(); ++i)
            change = std::max(change, std::abs(d.logits_amodal.value()[i] - t.logits_amodal.value()[i]));
        o.require(change > 0.0, "amodal logits ignore F_o");
        max_change = std::max(max_change, change);
    }
    o.detail << zeros << " amodal-branch gradient entries exactly 0; perturbing F_o moves amodal logits by up to "
             << std::setprecision(3) << max_change;
}

void loss_identities(Outcome& o)
{
    double worst = 0.0;
    for (std::uint64_t s = 0; s < 20; ++s) {
        GraspModel m(mini_config(), s);
        randomize(m, s);
        const auto inst = mini_instance(s);
        Tape tape;
        const ParamVars vars = m.bind(tape);
        const ForwardTrace t = m.forward(tape, vars, *inst.image, perturb_vm(inst.visible, s));
        const LossBreakdown l = total_loss(t, inst.amodal, inst.visible).values;
        worst = std::max(worst, std::abs(l.total - (l.amodal + 1.5 * (l.bce_occ + l.dice_occ))));
        o.require(l.amodal == l.bce_amodal + l.dice_amodal, "L_amodal");
    }
    o.require(worst <= 1e-12, "breakdown identity");
    bool ln2 = true;
    Rng rng(6);
    for (std::size_t n : {1, 7, 16, 64, 100}) {
        Tape tape;
        const double v = bce(tape.constant(Tensor({n, n}, 0.0)), random_mask(n, n, 0.5, rng)).value().item();
        ln2 = ln2 && v == std::log(2.0);
    }
    o.require(ln2, "bce(0) == ln 2");
    o.detail << "max |L_total - (L_amodal + 1.5 (bce_occ + dice_occ))| = " << worst
             << " over 20 instances; bce(0 logits) == ln 2 bit-exact on 5 sizes";
}

void desk_run(Outcome& o)
{
    const auto t0 = std::chrono::steady_clock::now();
    RunConfig cfg = load_run_config(GRASP_SOURCE_DIR "/configs/desk.json");
    cfg.train.seed = cfg.seed;
    const Dataset train_set = make_dataset(cfg.seed, 1000, cfg.data, "train");
    const Dataset test_set = make_dataset(1000000, 200, cfg.data, "test");

    GraspModel untrained(cfg.model, init_seed_for(cfg.seed));
    GraspModel model = untrained;
    const auto t_train = std::chrono::steady_clock::now();
    train(model, train_set.instances, cfg.train);
    const double train_seconds = seconds_since(t_train);

    EvalOptions opts;
    const double base = *evaluate(untrained, test_set.instances, opts).occ_miou;
    const Ablation ab = ablate(model, test_set.instances, opts);
    const double learned = *ab.rows[0].report.occ_miou;
    const double closed = *ab.rows[1].report.occ_miou;
    const double total_seconds = seconds_since(t0);

    o.require(learned - closed >= 0.02, "trained - gate0 >= 2 points");
    o.require(learned - base >= 0.20, "trained - untrained >= 20 points");
    bool all_positive = true;
    for (const auto& d : ab.bin_deltas)
        all_positive = all_positive && d && *d > 0.0;
    o.require(all_positive, "positive delta in every occ_ratio bin");
    o.require(train_seconds < 900.0, "training under 15 min");
    o.detail << train_set.instances.size() << " train / " << test_set.instances.size() << " test instances, lr "
             << cfg.train.lr << ", " << cfg.train.steps << " steps x batch " << cfg.train.batch_size
             << std::fixed << std::setprecision(2) << "; occ mIoU trained "
             << 100 * learned << ", gate=0 " << 100 * closed << ", untrained " << 100 * base << "; bin deltas";
    for (const auto& d : ab.bin_deltas)
        o.detail << ' ' << (d ? 100 * *d : std::nan(""));
    o.detail << "; train " << std::setprecision(0) << train_seconds << " s, total " << total_seconds << " s";
}

void zero_init(Outcome& o)
{
    const auto instances = default_instances(8, 5);
    GraspConfig mod;
    mod.sdf_query_mod = true;
    std::size_t n = 0;
    for (std::uint64_t s = 0; s < 3; ++s) {
        GraspModel base(GraspConfig{}, s);
        GraspModel with_mod(mod, s);
        for (const auto& inst : instances) {
            const Prediction ref = predict(base, *inst.image, inst.visible);
            for (const BinaryMask& v : {BinaryMask(64, 64), inst.visible.complement(), perturb_vm(inst.visible, s)}) {
                const Prediction p = predict(base, *inst.image, v);
                o.require(bit_equal(p.logits_amodal, ref.logits_amodal) && bit_equal(p.logits_occ, ref.logits_occ),
                          "visible-mask invariance");
            }
            const Prediction m = predict(with_mod, *inst.image, inst.visible);
            o.require(bit_equal(m.logits_amodal, ref.logits_amodal) && bit_equal(m.logits_occ, ref.logits_occ),
                      "sdf_query_mod invariance");
            ++n;
        }
    }
    o.detail << n << " instance/seed pairs: logits bit-invariant to 3 alternative visible masks and to sdf_query_mod";
}

void parameter_accounting(Outcome& o)
{
    GraspConfig c;
    const auto counts = GraspModel(c).count_params();
    o.require(counts.at("gate") == 2, "gate");
    o.require(counts.at("prototypes") == c.prototypes * c.token_dim, "prototypes");
    o.detail << "gate " << counts.at("gate") << ", prototypes " << counts.at("prototypes") << " (N_p " << c.prototypes
             << " x D " << c.token_dim << ")";
}

void two_pass_protocol(Outcome& o)
{
    std::size_t traces = 0;
    for (std::uint64_t s = 0; s < 10; ++s) {
        GraspModel m(mini_config(), s);
        randomize(m, s);
        const auto inst = mini_instance(s);
        const TwoPassTrace t = two_pass(m, *inst.image, perturb_vm(inst.visible, s));
        o.require(t.passes == 2, "pass count");
        o.require(t.v_ref == mask_diff(t.first.amodal, t.first.occluded), "V_ref");
        if (!t.fallback) {
            const Prediction second = predict(m, *inst.image, t.v_ref);
            o.require(bit_equal(second.logits_amodal, t.second.logits_amodal), "second pass input");
        }
        ++traces;
    }
    // an amodal head biased far negative predicts nothing, so V_ref is empty
    GraspModel m(mini_config(), 3);
    randomize(m, 3);
    for (double& b : m.params().amodal_head_b.values())
        b = -100.0;
    const auto inst = mini_instance(3);
    const TwoPassTrace fb = two_pass(m, *inst.image, inst.visible);
    o.require(fb.fallback && fb.v_ref.none() && fb.passes == 2, "fallback");
    const Prediction second = predict(m, *inst.image, inst.visible);
    o.require(bit_equal(second.logits_occ, fb.second.logits_occ), "fallback uses v_pred");
    o.detail << traces << " traces with 2 passes and V_ref = A1 \\ O1 bit-exact; empty-V_ref fallback exercised";
}

void probe_correctness(Outcome& o)
{
    double worst = 0.0;
    for (std::uint64_t s = 0; s < 20; ++s) {
        Rng rng(s);
        const Tensor x = random_tensor({20, 5}, rng, -2.0, 2.0);
        std::vector<double> y(20);
        for (auto& v : y)
            v = rng.normal();
        const RidgeModel m = ridge_fit(x, y, 1.0);
        const auto oracle = naive_ridge(x, y, 1.0);
        worst = std::max(worst, relative_error(m.intercept, oracle[0], 1e-12));
        for (std::size_t j = 0; j < 5; ++j)
            worst = std::max(worst, relative_error(m.weights[j], oracle[j + 1], 1e-12));
    }
    o.require(worst < 1e-8, "independent solve");

    Rng rng(11);
    ProbeSet planted;
    planted.features = Tensor({800, 4});
    for (std::size_t i = 0; i < 800; ++i) {
        const double d = rng.uniform(-1.0, 1.0);
        planted.targets.push_back(d);
        planted.instance.push_back(i / 16);
        planted.features.at(i, 0) = d;
        for (std::size_t j = 1; j < 4; ++j)
            planted.features.at(i, j) = rng.normal();
    }
    const double planted_r2 = *fit_and_score(planted, probe_split(50, 0.8, 1), ProbePosition::PreCa, 1.0).r2;
    o.require(planted_r2 > 0.999, "planted signal");

    GraspModel model(GraspConfig{}, 0);
    const auto data = default_instances(500, 280);
    const ProbeSet random = extract_probe_set(model, data, ProbePosition::RandomBaseline, 11);
    const ProbeResult r = fit_and_score(random, probe_split(data.size(), 0.8, 11), ProbePosition::RandomBaseline, 1.0);
    o.require(r.n_test >= 10000, "test tokens");
    o.require(r.r2 && std::abs(*r.r2) < 0.05, "random baseline");
    o.detail << "ridge vs elimination max rel " << std::setprecision(3) << worst << "; planted R2 "
             << std::setprecision(6) << planted_r2 << "; random baseline R2 " << std::setprecision(3) << *r.r2
             << " on " << r.n_test << " test tokens";
}

std::map<std::string, std::string> snapshot(const fs::path& dir)
{
    std::map<std::string, std::string> files;
    for (const auto& e : fs::recursive_directory_iterator(dir))
        if (e.is_regular_file())
            files[fs::relative(e.path(), dir).string()] = read_file(e.path());
    return files;
}

void determinism(Outcome& o)
{
    const fs::path dir = scratch_dir("acceptance_determinism");
    auto run = [&](std::vector<std::string> args) {
        std::ostringstream out, err;
        const int code = dispatch(args, out, err);
        if (code != 0)
            o.require(false, args[0] + ": " + err.str());
    };
    const std::string data = (dir / "data").string(), ckpt = (dir / "model.ckpt").string();
    std::map<std::string, std::string> first;
    for (int pass = 0; pass < 2; ++pass) {
        fs::remove_all(dir);
        fs::create_directories(dir);
        run({"gen", "--out", data, "--n", "12", "--seed", "5"});
        run({"train", "--data", data, "--out", ckpt, "--steps", "40", "--batch", "4", "--seed", "5"});
        run({"eval", "--ckpt", ckpt, "--data", data, "--protocol", "standard", "--seed", "5", "--out",
             (dir / "eval").string()});
        run({"probe", "--ckpt", ckpt, "--data", data, "--seed", "5", "--out", (dir / "probe").string()});
        if (pass == 0)
            first = snapshot(dir);
    }
    const auto second = snapshot(dir);
    o.require(first == second, "outputs differ between runs");
    o.require(first.count("model.ckpt") && first.count("loss.csv") && first.count("eval/report.json") &&
                  first.count("probe/probe.json") && first.count("data/manifest.json"),
              "missing outputs");
    o.detail << first.size() << " files from gen/train/eval/probe bit-identical across two runs";
}

void metrics_fixture(Outcome& o)
{
    const BinaryMask a = pixels(8, {{1, 1}, {1, 2}, {2, 1}, {2, 2}});
    const BinaryMask v = pixels(8, {{1, 1}, {1, 2}});
    std::vector<SceneInstance> data{handmade(0, a, v), handmade(1, a, v), handmade(2, a, a)};
    TablePredictor stub;
    stub.table[0] = {a, mask_diff(a, v), {}, {}, {}, {}, {}};
    stub.table[1] = {pixels(8, {{1, 1}, {1, 2}}), pixels(8, {{2, 1}}), {}, {}, {}, {}, {}};
    stub.table[2] = {pixels(8, {{2, 2}}), BinaryMask(8, 8), {}, {}, {}, {}, {}};
    const EvalReport r = evaluate(stub, data, {});
    o.require(std::abs(r.full_miou - 0.58333) < 1e-5 && std::abs(r.full_miou - 1.75 / 3.0) < 1e-9, "full mIoU");
    o.require(r.occluded_instances == 2 && !r.rows[2].occ_iou && *r.occ_miou == 0.75, "occ averaging");
    o.detail << std::setprecision(10) << "IoUs {" << r.rows[0].full_iou << ", " << r.rows[1].full_iou << ", "
             << r.rows[2].full_iou << "} -> full mIoU " << r.full_miou << "; occ mIoU " << *r.occ_miou << " over "
             << r.occluded_instances << " occluded instances";
}

} // namespace

int main(int argc, char** argv)
{
    const std::vector<std::pair<std::string, Check>> criteria{
        {"gate anchor", gate_anchor},
        {"sdf oracle", sdf_oracle},
        {"gradient suite", gradient_suite},
        {"gate override identities", gate_identities},
        {"decoder asymmetry", structural_asymmetry},
        {"loss identities", loss_identities},
        {"desk training and gate ablation", desk_run},
        {"zero-init contracts", zero_init},
        {"parameter accounting", parameter_accounting},
        {"two-pass protocol", two_pass_protocol},
        {"probe correctness", probe_correctness},
        {"determinism", determinism},
        {"metrics fixture", metrics_fixture},
    };
    std::set<std::size_t> only;
    for (int i = 1; i < argc; ++i)
        only.insert(std::stoul(argv[i]));

    std::size_t failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        if (!only.empty() && !only.count(i + 1))
            continue;
        Outcome o;
        try {
            criteria[i].second(o);
        } catch (const std::exception& e) {
            o.require(false, std::string("exception: ") + e.what());
        }
        failed += o.pass ? 0 : 1;
        std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << std::setw(2) << i + 1 << " " << criteria[i].first
                  << ": " << o.detail.str() << std::endl;
    }
    std::cout << (failed ? "FAILED " : "ALL PASSED ") << failed << " failing criteria" << std::endl;
    return failed ? 1 : 0;
}
