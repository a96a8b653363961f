#include "grasp/evalkit.hpp"

#include "grasp/errors.hpp"
#include "grasp/parallel.hpp"
#include "grasp/rng.hpp"
#include "grasp/version.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

namespace grasp {

using nlohmann::json;

BinaryMask threshold_logits(const Tensor& logits, double threshold)
{
    if (logits.rank() != 2)
        throw DimensionError("threshold_logits expects an H x W tensor, got " + shape_string(logits.shape()));
    std::vector<std::uint8_t> bits(logits.size());
    for (std::size_t i = 0; i < logits.size(); ++i)
        bits[i] = 1.0 / (1.0 + std::exp(-logits[i])) > threshold;
    return BinaryMask(logits.dim(0), logits.dim(1), std::move(bits));
}

Prediction predict(const GraspModel& model, const GrayImage& image, const BinaryMask& v_input, double threshold)
{
    Tape tape;
    const ParamVars vars = model.bind(tape);
    const ForwardTrace trace = model.forward(tape, vars, image, v_input);
    Prediction p;
    p.logits_amodal = trace.logits_amodal.value();
    p.logits_occ = trace.logits_occ.value();
    p.amodal = threshold_logits(p.logits_amodal, threshold);
    p.occluded = threshold_logits(p.logits_occ, threshold);
    p.gate = trace.gate.value().vector();
    p.sdf_tokens = trace.sdf_tokens;
    p.spm_attention = trace.spm_attention;
    return p;
}

Prediction ModelPredictor::predict(const SceneInstance& instance, const BinaryMask& v_input) const
{
    return grasp::predict(model_, *instance.image, v_input, threshold_);
}

GraspModel with_gate_override(const GraspModel& model, std::optional<double> c)
{
    GraspConfig config = model.config();
    config.gate_override = c;
    return GraspModel(config, model.params());
}

BinaryMask postprocess_union(const BinaryMask& amodal, const BinaryMask& v_input) { return mask_union(amodal, v_input); }

TwoPassTrace two_pass(const Predictor& predictor, const SceneInstance& instance, const BinaryMask& v_pred)
{
    TwoPassTrace t;
    t.first = predictor.predict(instance, v_pred);
    t.v_ref = mask_diff(t.first.amodal, t.first.occluded);
    t.fallback = t.v_ref.none();
    t.second = predictor.predict(instance, t.fallback ? v_pred : t.v_ref);
    t.passes = 2;
    return t;
}

TwoPassTrace two_pass(const GraspModel& model, const GrayImage& image, const BinaryMask& v_pred, double threshold)
{
    SceneInstance holder;
    holder.image = std::make_shared<GrayImage>(image);
    return two_pass(ModelPredictor(model, threshold), holder, v_pred);
}

std::string to_string(Protocol p) { return p == Protocol::Oracle ? "oracle" : "standard"; }

Protocol protocol_from_string(const std::string& s)
{
    if (s == "oracle")
        return Protocol::Oracle;
    if (s == "standard")
        return Protocol::Standard;
    throw ConfigError("unknown protocol '" + s + "' (expected oracle or standard)");
}

std::string to_string(OccMode m) { return m == OccMode::OccHead ? "occ_head" : "amodal_minus_visible"; }

OccMode occ_mode_from_string(const std::string& s)
{
    if (s == "occ_head")
        return OccMode::OccHead;
    if (s == "amodal_minus_visible")
        return OccMode::AmodalMinusVisible;
    throw ConfigError("unknown occ mode '" + s + "' (expected occ_head or amodal_minus_visible)");
}

json to_json(const EvalOptions& o)
{
    return {{"protocol", to_string(o.protocol)},
            {"gate_override", o.gate_override ? json(*o.gate_override) : json(nullptr)},
            {"two_pass", o.use_two_pass},
            {"pp", o.use_pp},
            {"occ_mode", to_string(o.occ_mode)},
            {"threshold", o.threshold},
            {"eval_seed", o.eval_seed}};
}

BinaryMask standard_vm(const SceneInstance& instance, std::uint64_t eval_seed)
{
    return perturb_vm(instance.visible, derive_seed(eval_seed, "eval", instance.id));
}

// ---- strata ------------------------------------------------------------------

namespace {

std::optional<std::size_t> bin_of(double x, const std::vector<double>& edges)
{
    const std::size_t bins = edges.size() - 1;
    for (std::size_t b = 0; b < bins; ++b) {
        const bool last = b + 1 == bins;
        if (x >= edges[b] && (x < edges[b + 1] || (last && x == edges[b + 1])))
            return b;
    }
    return std::nullopt;
}

void check_edges(const std::vector<double>& edges)
{
    if (edges.size() < 2)
        throw ConfigError("need at least two bin edges");
    for (std::size_t i = 1; i < edges.size(); ++i)
        if (!(edges[i] > edges[i - 1]))
            throw ConfigError("bin edges must be strictly increasing");
}

GroupStat group_stat(const std::vector<double>& xs)
{
    GroupStat g;
    g.n = xs.size();
    if (xs.empty())
        return g;
    g.mean = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
    double ss = 0.0;
    for (double x : xs)
        ss += (x - g.mean) * (x - g.mean);
    g.std = std::sqrt(ss / static_cast<double>(xs.size()));
    return g;
}

} // namespace

StratumTable stratify(const std::vector<InstanceRow>& rows, const std::string& key, const std::vector<double>& edges)
{
    if (key != "occ_ratio" && key != "vm_iou")
        throw ConfigError("unknown stratification key '" + key + "' (expected occ_ratio or vm_iou)");
    check_edges(edges);
    StratumTable table;
    table.key = key;
    std::vector<double> sums(edges.size() - 1, 0.0);
    table.bins.resize(edges.size() - 1);
    for (std::size_t b = 0; b < table.bins.size(); ++b) {
        table.bins[b].lo = edges[b];
        table.bins[b].hi = edges[b + 1];
    }
    for (const auto& r : rows) {
        if (!r.occ_iou)
            continue;
        double x = r.occ_ratio;
        if (key == "vm_iou") {
            if (!r.vm_iou)
                throw ConfigError("instance " + std::to_string(r.id) + " has no vm_iou to stratify by");
            x = *r.vm_iou;
        }
        const auto b = bin_of(x, edges);
        if (!b) {
            ++table.outside;
            continue;
        }
        ++table.bins[*b].n;
        sums[*b] += *r.occ_iou;
    }
    for (std::size_t b = 0; b < table.bins.size(); ++b)
        if (table.bins[b].n)
            table.bins[b].mean_occ_iou = sums[b] / static_cast<double>(table.bins[b].n);
    return table;
}

// ---- gate and attention statistics ---------------------------------------------

GridPosition grid_position(std::size_t token, std::size_t grid)
{
    const std::size_t r = token / grid, c = token % grid;
    const bool row_border = r == 0 || r + 1 == grid;
    const bool col_border = c == 0 || c + 1 == grid;
    if (row_border && col_border)
        return GridPosition::Corner;
    if (row_border || col_border)
        return GridPosition::Edge;
    return GridPosition::Center;
}

GateStats gate_statistics(const std::vector<GateSample>& samples, std::size_t grid, const std::vector<double>& edges)
{
    check_edges(edges);
    std::vector<std::vector<double>> per_bin(edges.size() - 1);
    std::array<std::vector<double>, 3> per_position;
    for (const auto& s : samples) {
        if (s.gate.size() != grid * grid)
            throw DimensionError("gate sample has " + std::to_string(s.gate.size()) + " tokens, grid has " +
                                 std::to_string(grid * grid));
        const double m = std::accumulate(s.gate.begin(), s.gate.end(), 0.0) / static_cast<double>(s.gate.size());
        if (const auto b = bin_of(s.occ_ratio, edges))
            per_bin[*b].push_back(m);
        for (std::size_t t = 0; t < s.gate.size(); ++t)
            per_position[static_cast<std::size_t>(grid_position(t, grid))].push_back(s.gate[t]);
    }
    GateStats out;
    out.edges = edges;
    for (const auto& b : per_bin)
        out.per_bin.push_back(group_stat(b));
    for (std::size_t k = 0; k < 3; ++k)
        out.per_position[k] = group_stat(per_position[k]);
    return out;
}

double jsd(const std::vector<double>& p, const std::vector<double>& q)
{
    if (p.size() != q.size() || p.empty())
        throw DimensionError("jsd needs two distributions of equal nonzero length");
    auto term = [](double a, double m) { return a > 0.0 ? a * std::log2(a / m) : 0.0; };
    double d = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double m = 0.5 * (p[i] + q[i]);
        d += 0.5 * term(p[i], m) + 0.5 * term(q[i], m);
    }
    return std::clamp(d, 0.0, 1.0);
}

namespace {

// Per-group sums of head-averaged prototype distributions.
struct AttentionAccumulator
{
    std::vector<double> occluded_sum, visible_sum;
    double occluded_top1 = 0.0, visible_top1 = 0.0;
    std::size_t occluded_tokens = 0, visible_tokens = 0, instances = 0, skipped = 0;

    void add(const AttentionSample& s)
    {
        const Tensor& a = s.attention;
        if (a.rank() != 3 || a.dim(1) != s.sdf_tokens.size())
            throw DimensionError("attention sample shape " + shape_string(a.shape()) + " does not match " +
                                 std::to_string(s.sdf_tokens.size()) + " tokens");
        const std::size_t heads = a.dim(0), L = a.dim(1), P = a.dim(2);
        std::size_t n_occ = 0;
        for (double d : s.sdf_tokens)
            n_occ += d > 0.0;
        if (occluded_sum.empty()) {
            occluded_sum.assign(P, 0.0);
            visible_sum.assign(P, 0.0);
        }
        if (occluded_sum.size() != P)
            throw DimensionError("attention samples disagree on the prototype count");
        if (n_occ == 0 || n_occ == L) {
            ++skipped;
            return;
        }
        ++instances;
        std::vector<double> dist(P);
        for (std::size_t t = 0; t < L; ++t) {
            std::fill(dist.begin(), dist.end(), 0.0);
            for (std::size_t h = 0; h < heads; ++h)
                for (std::size_t k = 0; k < P; ++k)
                    dist[k] += a[(h * L + t) * P + k] / static_cast<double>(heads);
            const double top1 = *std::max_element(dist.begin(), dist.end());
            const bool occ = s.sdf_tokens[t] > 0.0;
            auto& sum = occ ? occluded_sum : visible_sum;
            for (std::size_t k = 0; k < P; ++k)
                sum[k] += dist[k];
            (occ ? occluded_top1 : visible_top1) += top1;
            ++(occ ? occluded_tokens : visible_tokens);
        }
    }

    void merge(const AttentionAccumulator& o)
    {
        if (o.occluded_sum.empty()) {
            skipped += o.skipped;
            return;
        }
        if (occluded_sum.empty()) {
            occluded_sum.assign(o.occluded_sum.size(), 0.0);
            visible_sum.assign(o.visible_sum.size(), 0.0);
        }
        if (occluded_sum.size() != o.occluded_sum.size())
            throw DimensionError("attention samples disagree on the prototype count");
        for (std::size_t k = 0; k < occluded_sum.size(); ++k) {
            occluded_sum[k] += o.occluded_sum[k];
            visible_sum[k] += o.visible_sum[k];
        }
        occluded_top1 += o.occluded_top1;
        visible_top1 += o.visible_top1;
        occluded_tokens += o.occluded_tokens;
        visible_tokens += o.visible_tokens;
        instances += o.instances;
        skipped += o.skipped;
    }

    AttentionStats finish() const
    {
        AttentionStats s;
        s.instances = instances;
        s.skipped = skipped;
        s.occluded_tokens = occluded_tokens;
        s.visible_tokens = visible_tokens;
        if (instances == 0)
            return s;
        s.occluded_mean = occluded_sum;
        s.visible_mean = visible_sum;
        for (auto& x : s.occluded_mean)
            x /= static_cast<double>(occluded_tokens);
        for (auto& x : s.visible_mean)
            x /= static_cast<double>(visible_tokens);
        s.occluded_top1 = occluded_top1 / static_cast<double>(occluded_tokens);
        s.visible_top1 = visible_top1 / static_cast<double>(visible_tokens);
        s.jsd = jsd(s.occluded_mean, s.visible_mean);
        return s;
    }
};

} // namespace

AttentionStats attention_statistics(const std::vector<AttentionSample>& samples)
{
    AttentionAccumulator acc;
    for (const auto& s : samples)
        acc.add(s);
    return acc.finish();
}

// ---- evaluation ----------------------------------------------------------------

namespace {

std::string format_number(double c)
{
    std::ostringstream out;
    out << c;
    return out.str();
}

} // namespace

EvalReport evaluate(const Predictor& predictor, const std::vector<SceneInstance>& data, const EvalOptions& options)
{
    if (data.empty())
        throw ConfigError("evaluation dataset is empty");

    const std::size_t n = data.size();
    std::vector<InstanceRow> rows(n);
    std::vector<GateSample> gates(n);
    std::vector<AttentionAccumulator> attention(n);
    std::vector<char> has_gate(n, 0), has_attention(n, 0);

    parallel_for(n, [&](std::size_t i) {
        const SceneInstance& inst = data[i];
        const BinaryMask v_input =
            options.protocol == Protocol::Oracle ? inst.visible : standard_vm(inst, options.eval_seed);
        Prediction pred = options.use_two_pass ? two_pass(predictor, inst, v_input).second
                                               : predictor.predict(inst, v_input);
        const BinaryMask amodal = options.use_pp ? postprocess_union(pred.amodal, v_input) : pred.amodal;

        InstanceRow& row = rows[i];
        row.id = inst.id;
        row.occ_ratio = inst.occ_ratio;
        row.full_iou = iou(amodal, inst.amodal);
        if (inst.occluded.any()) {
            const BinaryMask occ =
                options.occ_mode == OccMode::OccHead ? pred.occluded : mask_diff(amodal, inst.visible);
            row.occ_iou = iou(occ, inst.occluded);
        }
        if (options.protocol == Protocol::Standard)
            row.vm_iou = iou(v_input, inst.visible);
        if (!pred.gate.empty()) {
            row.mean_gate = std::accumulate(pred.gate.begin(), pred.gate.end(), 0.0) /
                            static_cast<double>(pred.gate.size());
            gates[i] = {inst.occ_ratio, std::move(pred.gate)};
            has_gate[i] = 1;
        }
        if (pred.spm_attention.rank() == 3) {
            attention[i].add({pred.spm_attention, pred.sdf_tokens});
            has_attention[i] = 1;
        }
    });

    EvalReport report;
    report.options = options;
    report.protocol = to_string(options.protocol);
    report.rows = std::move(rows);

    double full = 0.0, occ = 0.0;
    for (const auto& r : report.rows) {
        full += r.full_iou;
        if (r.occ_iou) {
            occ += *r.occ_iou;
            ++report.occluded_instances;
        }
        if (r.vm_iou && *r.vm_iou < kVmIouBins.front())
            ++report.vm_iou_below_range;
    }
    report.full_miou = full / static_cast<double>(n);
    if (report.occluded_instances)
        report.occ_miou = occ / static_cast<double>(report.occluded_instances);
    report.by_occ_ratio = stratify(report.rows, "occ_ratio", kOccRatioBins);
    if (options.protocol == Protocol::Standard)
        report.by_vm_iou = stratify(report.rows, "vm_iou", kVmIouBins);

    if (std::all_of(has_gate.begin(), has_gate.end(), [](char c) { return c != 0; })) {
        const auto grid = static_cast<std::size_t>(std::lround(std::sqrt(static_cast<double>(gates[0].gate.size()))));
        report.gate = gate_statistics(gates, grid);
    }
    if (std::all_of(has_attention.begin(), has_attention.end(), [](char c) { return c != 0; })) {
        AttentionAccumulator total;
        for (const auto& a : attention)
            total.merge(a);
        report.attention = total.finish();
    }
    return report;
}

EvalReport evaluate(const GraspModel& model, const std::vector<SceneInstance>& data, const EvalOptions& options)
{
    const std::size_t size = model.config().image_size;
    for (const auto& inst : data)
        if (!inst.image || inst.image->height != size || inst.image->width != size)
            throw ConfigError("instance " + std::to_string(inst.id) + " does not match the model's " +
                              std::to_string(size) + "x" + std::to_string(size) + " input size");
    const GraspModel effective = with_gate_override(model, options.gate_override);
    EvalReport report = evaluate(ModelPredictor(effective, options.threshold), data, options);
    if (options.gate_override)
        report.protocol = "intervention " + format_number(*options.gate_override);
    return report;
}

Ablation ablate(const GraspModel& model, const std::vector<SceneInstance>& data, EvalOptions options)
{
    Ablation out;
    const std::vector<std::pair<std::string, std::optional<double>>> settings{
        {"learned", std::nullopt}, {"s=0", 0.0}, {"s=0.5", 0.5}, {"s=1", 1.0}};
    for (const auto& [name, gate] : settings) {
        options.gate_override = gate;
        out.rows.push_back({name, gate, evaluate(model, data, options)});
    }
    const auto& learned = out.rows[0].report.by_occ_ratio.bins;
    const auto& zero = out.rows[1].report.by_occ_ratio.bins;
    for (std::size_t b = 0; b < learned.size(); ++b) {
        if (learned[b].mean_occ_iou && zero[b].mean_occ_iou)
            out.bin_deltas.push_back(*learned[b].mean_occ_iou - *zero[b].mean_occ_iou);
        else
            out.bin_deltas.push_back(std::nullopt);
    }
    return out;
}

GateStats gate_stats(const GraspModel& model, const std::vector<SceneInstance>& data)
{
    return *evaluate(model, data, EvalOptions{}).gate;
}

AttentionStats attention_stats(const GraspModel& model, const std::vector<SceneInstance>& data)
{
    return *evaluate(model, data, EvalOptions{}).attention;
}

// ---- serialization -------------------------------------------------------------

namespace {

json opt(const std::optional<double>& x) { return x ? json(*x) : json(nullptr); }

json to_json(const GroupStat& g) { return {{"n", g.n}, {"mean", g.mean}, {"std", g.std}}; }

} // namespace

json to_json(const StratumTable& t)
{
    json bins = json::array();
    for (const auto& b : t.bins)
        bins.push_back({{"lo", b.lo}, {"hi", b.hi}, {"n", b.n}, {"mean_occ_iou", opt(b.mean_occ_iou)}});
    return {{"key", t.key}, {"bins", bins}, {"outside", t.outside}};
}

json to_json(const GateStats& s)
{
    json bins = json::array();
    for (std::size_t b = 0; b < s.per_bin.size(); ++b) {
        json j = to_json(s.per_bin[b]);
        j["lo"] = s.edges[b];
        j["hi"] = s.edges[b + 1];
        bins.push_back(j);
    }
    return {{"per_occ_ratio_bin", bins},
            {"per_position",
             {{"corner", to_json(s.per_position[0])},
              {"edge", to_json(s.per_position[1])},
              {"center", to_json(s.per_position[2])}}}};
}

json to_json(const AttentionStats& s)
{
    return {{"jsd_bits", s.jsd},
            {"occluded_top1", s.occluded_top1},
            {"visible_top1", s.visible_top1},
            {"occluded_tokens", s.occluded_tokens},
            {"visible_tokens", s.visible_tokens},
            {"instances", s.instances},
            {"skipped_instances", s.skipped},
            {"occluded_mean", s.occluded_mean},
            {"visible_mean", s.visible_mean}};
}

json to_json(const EvalReport& r)
{
    json rows = json::array();
    for (const auto& row : r.rows)
        rows.push_back({{"id", row.id},
                        {"full_iou", row.full_iou},
                        {"occ_iou", opt(row.occ_iou)},
                        {"occ_ratio", row.occ_ratio},
                        {"vm_iou", opt(row.vm_iou)},
                        {"mean_gate", opt(row.mean_gate)}});
    json j{{"protocol", r.protocol},
           {"options", to_json(r.options)},
           {"instances", r.rows.size()},
           {"occluded_instances", r.occluded_instances},
           {"full_miou", r.full_miou},
           {"occ_miou", opt(r.occ_miou)},
           {"by_occ_ratio", to_json(r.by_occ_ratio)},
           {"rows", rows}};
    if (r.by_vm_iou) {
        j["by_vm_iou"] = to_json(*r.by_vm_iou);
        j["vm_iou_below_range"] = r.vm_iou_below_range;
    }
    if (r.gate)
        j["gate"] = to_json(*r.gate);
    if (r.attention)
        j["attention"] = to_json(*r.attention);
    return j;
}

namespace {

std::ofstream open_csv(const std::filesystem::path& path, const json& run_config)
{
    std::ofstream out(path);
    if (!out)
        throw IoError("cannot write " + path.string());
    out << "# " << kVersion << " run_config=" << run_config.dump() << '\n';
    out.precision(17);
    return out;
}

void write_opt(std::ostream& out, const std::optional<double>& x)
{
    if (x)
        out << *x;
}

} // namespace

void write_report(const std::filesystem::path& dir, const EvalReport& report, const json& run_config)
{
    std::filesystem::create_directories(dir);
    json j = to_json(report);
    j["version"] = kVersion;
    j["run_config"] = run_config;
    {
        std::ofstream out(dir / "report.json");
        if (!out)
            throw IoError("cannot write " + (dir / "report.json").string());
        out << j.dump(1) << '\n';
    }
    auto out = open_csv(dir / "report.csv", run_config);
    out << "id,full_iou,occ_iou,occ_ratio,vm_iou,mean_gate\n";
    for (const auto& r : report.rows) {
        out << r.id << ',' << r.full_iou << ',';
        write_opt(out, r.occ_iou);
        out << ',' << r.occ_ratio << ',';
        write_opt(out, r.vm_iou);
        out << ',';
        write_opt(out, r.mean_gate);
        out << '\n';
    }
}

void write_ablation_csv(const std::filesystem::path& path, const Ablation& ablation, const json& run_config)
{
    auto out = open_csv(path, run_config);
    out << "setting,gate,full_miou,occ_miou";
    for (std::size_t b = 0; b + 1 < kOccRatioBins.size(); ++b)
        out << ",occ_miou_bin" << b;
    out << '\n';
    for (const auto& row : ablation.rows) {
        out << row.setting << ',';
        write_opt(out, row.gate);
        out << ',' << row.report.full_miou << ',';
        write_opt(out, row.report.occ_miou);
        for (const auto& b : row.report.by_occ_ratio.bins) {
            out << ',';
            write_opt(out, b.mean_occ_iou);
        }
        out << '\n';
    }
    out << "delta_learned_minus_s0,,,";
    if (ablation.rows.size() >= 2 && ablation.rows[0].report.occ_miou && ablation.rows[1].report.occ_miou)
        out << *ablation.rows[0].report.occ_miou - *ablation.rows[1].report.occ_miou;
    for (const auto& d : ablation.bin_deltas) {
        out << ',';
        write_opt(out, d);
    }
    out << '\n';
}

} // namespace grasp
