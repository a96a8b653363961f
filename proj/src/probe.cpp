#include "grasp/probe.hpp"

#include "grasp/errors.hpp"
#include "grasp/parallel.hpp"
#include "grasp/rng.hpp"
#include "grasp/version.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <fstream>

namespace grasp {

using nlohmann::json;

std::string to_string(ProbePosition p)
{
    switch (p) {
    case ProbePosition::PreCa:
        return "pre_ca";
    case ProbePosition::PostCa:
        return "post_ca";
    case ProbePosition::RandomBaseline:
        return "random_baseline";
    }
    return "unknown";
}

ProbePosition probe_position_from_string(const std::string& s)
{
    if (s == "pre_ca")
        return ProbePosition::PreCa;
    if (s == "post_ca")
        return ProbePosition::PostCa;
    if (s == "random_baseline")
        return ProbePosition::RandomBaseline;
    throw ConfigError("unknown probe position '" + s + "' (expected pre_ca, post_ca or random_baseline)");
}

ProbeSet extract_probe_set(const GraspModel& model, const std::vector<SceneInstance>& data, ProbePosition position,
                           std::uint64_t seed)
{
    const std::size_t L = model.config().tokens(), D = model.config().token_dim;
    ProbeSet set;
    set.features = Tensor({std::max<std::size_t>(data.size() * L, 1), D});
    set.targets.resize(data.size() * L);
    set.instance.resize(data.size() * L);
    if (data.empty())
        throw ConfigError("probe dataset is empty");

    parallel_for(data.size(), [&](std::size_t i) {
        const SceneInstance& inst = data[i];
        const auto targets = model.sdf_tokens(inst.visible);
        std::vector<double> rows(L * D);
        if (position == ProbePosition::RandomBaseline) {
            Rng rng(derive_seed(seed, "probe", i));
            for (auto& x : rows)
                x = rng.normal();
        } else {
            Tape tape;
            const ParamVars vars = model.bind(tape);
            Var tokens = model.encode(tape, vars, *inst.image);
            if (position == ProbePosition::PostCa)
                tokens = model.vm_encode_fuse(tape, vars, tokens, inst.visible);
            const auto v = tokens.value().values();
            std::copy(v.begin(), v.end(), rows.begin());
        }
        for (std::size_t t = 0; t < L; ++t) {
            std::copy_n(rows.begin() + static_cast<std::ptrdiff_t>(t * D), D,
                        set.features.values().begin() + static_cast<std::ptrdiff_t>((i * L + t) * D));
            set.targets[i * L + t] = targets[t];
            set.instance[i * L + t] = i;
        }
    });
    return set;
}

RidgeModel ridge_fit(const Tensor& x, const std::vector<double>& y, double lambda)
{
    if (x.rank() != 2 || x.dim(0) != y.size())
        throw DimensionError("ridge_fit: features " + shape_string(x.shape()) + " vs " + std::to_string(y.size()) +
                             " targets");
    if (lambda < 0.0)
        throw ConfigError("ridge lambda must be non-negative");
    const std::size_t n = x.dim(0), d = x.dim(1);
    if (n <= d)
        throw ConfigError("ridge_fit needs more rows (" + std::to_string(n) + ") than features (" +
                          std::to_string(d) + ")");

    using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    Eigen::Map<const Matrix> X(x.values().data(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
    Eigen::Map<const Eigen::VectorXd> Y(y.data(), static_cast<Eigen::Index>(n));

    const Eigen::RowVectorXd mean_x = X.colwise().mean();
    const double mean_y = Y.mean();
    const Matrix xc = X.rowwise() - mean_x;
    Eigen::MatrixXd gram = xc.transpose() * xc;
    gram.diagonal().array() += lambda;
    const Eigen::VectorXd rhs = xc.transpose() * (Y.array() - mean_y).matrix();

    Eigen::LLT<Eigen::MatrixXd> llt(gram);
    const Eigen::VectorXd diag = gram.diagonal();
    const double scale = diag.maxCoeff();
    bool singular = llt.info() != Eigen::Success || !(scale > 0.0);
    if (!singular) {
        const Eigen::VectorXd l = llt.matrixLLT().diagonal();
        singular = (l.minCoeff() * l.minCoeff()) < 1e-13 * scale;
    }
    if (singular)
        throw NumericError("ridge system is singular; use lambda > 0");

    const Eigen::VectorXd w = llt.solve(rhs);
    RidgeModel out;
    out.lambda = lambda;
    out.weights.assign(w.data(), w.data() + w.size());
    out.intercept = mean_y - mean_x.dot(w);
    return out;
}

std::vector<double> ridge_predict(const RidgeModel& model, const Tensor& x)
{
    if (x.rank() != 2 || x.dim(1) != model.weights.size())
        throw DimensionError("ridge_predict: features " + shape_string(x.shape()) + " vs " +
                             std::to_string(model.weights.size()) + " weights");
    std::vector<double> out(x.dim(0), model.intercept);
    for (std::size_t i = 0; i < x.dim(0); ++i)
        for (std::size_t j = 0; j < x.dim(1); ++j)
            out[i] += x.at(i, j) * model.weights[j];
    return out;
}

std::optional<double> r2_score(const std::vector<double>& truth, const std::vector<double>& predicted)
{
    if (truth.size() != predicted.size() || truth.empty())
        throw DimensionError("r2_score needs equal nonzero lengths");
    double mean = 0.0;
    for (double t : truth)
        mean += t;
    mean /= static_cast<double>(truth.size());
    double ss_res = 0.0, ss_tot = 0.0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        ss_res += (truth[i] - predicted[i]) * (truth[i] - predicted[i]);
        ss_tot += (truth[i] - mean) * (truth[i] - mean);
    }
    if (ss_tot == 0.0)
        return std::nullopt;
    return 1.0 - ss_res / ss_tot;
}

double sign_accuracy(const std::vector<double>& truth, const std::vector<double>& predicted)
{
    if (truth.size() != predicted.size() || truth.empty())
        throw DimensionError("sign_accuracy needs equal nonzero lengths");
    std::size_t hits = 0;
    for (std::size_t i = 0; i < truth.size(); ++i)
        hits += (truth[i] > 0.0) == (predicted[i] > 0.0);
    return static_cast<double>(hits) / static_cast<double>(truth.size());
}

std::vector<bool> probe_split(std::size_t instances, double train_fraction, std::uint64_t seed)
{
    if (!(train_fraction > 0.0 && train_fraction < 1.0))
        throw ConfigError("train fraction must lie strictly between 0 and 1");
    std::vector<std::size_t> order(instances);
    for (std::size_t i = 0; i < instances; ++i)
        order[i] = i;
    Rng rng(derive_seed(seed, "probe", 0, 1));
    for (std::size_t i = instances; i-- > 1;)
        std::swap(order[i], order[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i)))]);
    const auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(instances)));
    std::vector<bool> is_train(instances, false);
    for (std::size_t k = 0; k < n_train; ++k)
        is_train[order[k]] = true;
    return is_train;
}

ProbeResult fit_and_score(const ProbeSet& set, const std::vector<bool>& is_train, ProbePosition position,
                          double lambda, std::vector<double>* test_predictions)
{
    const std::size_t n = set.targets.size(), d = set.features.dim(1);
    std::vector<std::size_t> train_rows, test_rows;
    for (std::size_t r = 0; r < n; ++r)
        (is_train.at(set.instance[r]) ? train_rows : test_rows).push_back(r);
    if (test_rows.empty())
        throw ConfigError("probe test split is empty");

    auto gather_rows = [&](const std::vector<std::size_t>& rows, Tensor& x, std::vector<double>& y) {
        x = Tensor({rows.size(), d});
        y.resize(rows.size());
        for (std::size_t k = 0; k < rows.size(); ++k) {
            for (std::size_t j = 0; j < d; ++j)
                x.at(k, j) = set.features.at(rows[k], j);
            y[k] = set.targets[rows[k]];
        }
    };
    Tensor x_train, x_test;
    std::vector<double> y_train, y_test;
    gather_rows(train_rows, x_train, y_train);
    gather_rows(test_rows, x_test, y_test);

    const RidgeModel fit = ridge_fit(x_train, y_train, lambda);
    std::vector<double> predicted = ridge_predict(fit, x_test);

    ProbeResult r;
    r.position = position;
    r.lambda = lambda;
    r.n_train = train_rows.size();
    r.n_test = test_rows.size();
    r.r2 = r2_score(y_test, predicted);
    r.sign_accuracy = sign_accuracy(y_test, predicted);
    const auto positive = static_cast<double>(std::count_if(y_test.begin(), y_test.end(), [](double t) { return t > 0.0; }));
    r.majority_sign_rate = std::max(positive, static_cast<double>(y_test.size()) - positive) /
                           static_cast<double>(y_test.size());
    if (test_predictions)
        *test_predictions = std::move(predicted);
    return r;
}

ProbeReport probe_report(const GraspModel& model, const std::vector<SceneInstance>& data, const ProbeOptions& options)
{
    if (data.empty())
        throw ConfigError("probe dataset is empty");
    const std::vector<bool> is_train = probe_split(data.size(), options.train_fraction, options.seed);

    ProbeReport report;
    report.options = options;
    report.train_instances = static_cast<std::size_t>(std::count(is_train.begin(), is_train.end(), true));
    report.test_instances = data.size() - report.train_instances;
    const std::size_t L = model.config().tokens();

    for (ProbePosition position : {ProbePosition::PreCa, ProbePosition::PostCa, ProbePosition::RandomBaseline}) {
        const ProbeSet set = extract_probe_set(model, data, position, options.seed);
        std::vector<double> predicted;
        report.results.push_back(fit_and_score(set, is_train, position, options.lambda, &predicted));
        std::size_t k = 0;
        for (std::size_t r = 0; r < set.targets.size(); ++r)
            if (!is_train[set.instance[r]])
                report.pairs.push_back({position, data[set.instance[r]].id, r % L, set.targets[r], predicted[k++]});
    }
    const auto& a = report.results[0];
    const auto& b = report.results[1];
    if (a.r2 && b.r2)
        report.delta_r2 = *b.r2 - *a.r2;
    report.delta_sign_accuracy = b.sign_accuracy - a.sign_accuracy;
    return report;
}

json to_json(const ProbeResult& r)
{
    return {{"position", to_string(r.position)},
            {"r2", r.r2 ? json(*r.r2) : json("undefined")},
            {"sign_accuracy", r.sign_accuracy},
            {"majority_sign_rate", r.majority_sign_rate},
            {"n_train", r.n_train},
            {"n_test", r.n_test},
            {"lambda", r.lambda}};
}

json to_json(const ProbeReport& r)
{
    json results = json::array();
    for (const auto& x : r.results)
        results.push_back(to_json(x));
    return {{"results", results},
            {"delta_r2_post_minus_pre", r.delta_r2 ? json(*r.delta_r2) : json("undefined")},
            {"delta_sign_accuracy_post_minus_pre", r.delta_sign_accuracy},
            {"lambda", r.options.lambda},
            {"preprocessing", "column centering, unpenalized intercept"},
            {"split", {{"train_fraction", r.options.train_fraction},
                       {"unit", "instance"},
                       {"seed", r.options.seed},
                       {"train_instances", r.train_instances},
                       {"test_instances", r.test_instances}}}};
}

void write_probe_report(const std::filesystem::path& dir, const ProbeReport& report, const json& run_config)
{
    std::filesystem::create_directories(dir);
    json j = to_json(report);
    j["version"] = kVersion;
    j["run_config"] = run_config;
    {
        std::ofstream out(dir / "probe.json");
        if (!out)
            throw IoError("cannot write " + (dir / "probe.json").string());
        out << j.dump(1) << '\n';
    }
    std::ofstream out(dir / "probe_pairs.csv");
    if (!out)
        throw IoError("cannot write " + (dir / "probe_pairs.csv").string());
    out << "# " << kVersion << " run_config=" << run_config.dump() << '\n';
    out << "position,instance,token,true,predicted\n";
    out.precision(17);
    for (const auto& p : report.pairs)
        out << to_string(p.position) << ',' << p.instance << ',' << p.token << ',' << p.truth << ',' << p.predicted
            << '\n';
}

} // namespace grasp
