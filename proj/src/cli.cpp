#include "grasp/cli.hpp"

#include "grasp/errors.hpp"
#include "grasp/pgm.hpp"
#include "grasp/probe.hpp"
#include "grasp/rng.hpp"
#include "grasp/version.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <fstream>
#include <iostream>
#include <optional>

namespace grasp {

using nlohmann::json;
namespace fs = std::filesystem;

json to_json(const RunConfig& c)
{
    json eval = to_json(c.eval);
    eval.erase("eval_seed");
    return {{"seed", c.seed},
            {"data", to_json(c.data)},
            {"model", to_json(c.model)},
            {"train", to_json(c.train)},
            {"eval", eval},
            {"probe", {{"lambda", c.probe_lambda}}}};
}

RunConfig run_config_from_json(const json& j)
{
    if (!j.is_object())
        throw ConfigError("run config must be a JSON object");
    RunConfig c;
    try {
        c.seed = j.value("seed", c.seed);
        if (j.contains("data"))
            c.data = scene_config_from_json(j.at("data"));
        if (j.contains("model"))
            c.model = grasp_config_from_json(j.at("model"));
        if (j.contains("train"))
            c.train = train_config_from_json(j.at("train"));
        if (j.contains("eval")) {
            const json& e = j.at("eval");
            c.eval.protocol = protocol_from_string(e.value("protocol", to_string(c.eval.protocol)));
            if (e.contains("gate_override") && !e.at("gate_override").is_null())
                c.eval.gate_override = e.at("gate_override").get<double>();
            c.eval.use_two_pass = e.value("two_pass", c.eval.use_two_pass);
            c.eval.use_pp = e.value("pp", c.eval.use_pp);
            c.eval.occ_mode = occ_mode_from_string(e.value("occ_mode", to_string(c.eval.occ_mode)));
            c.eval.threshold = e.value("threshold", c.eval.threshold);
        }
        if (j.contains("probe"))
            c.probe_lambda = j.at("probe").value("lambda", c.probe_lambda);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("run config: ") + e.what());
    }
    return c;
}

RunConfig load_run_config(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw IoError("cannot open config " + path);
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw ConfigError("config " + path + " is not valid JSON: " + e.what());
    }
    return run_config_from_json(j);
}

std::uint64_t init_seed_for(std::uint64_t seed) { return derive_seed(seed, "init"); }

namespace {

std::string one_line(std::string s)
{
    for (char& c : s)
        if (c == '\n' || c == '\r')
            c = ' ';
    return s;
}

void report_error(std::ostream& err, const std::string& kind, const std::string& message)
{
    err << "error kind=" << kind << " message=" << json(one_line(message)).dump() << '\n';
}

void write_json(const fs::path& path, const json& j)
{
    if (path.has_parent_path())
        fs::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out)
        throw IoError("cannot write " + path.string());
    out << j.dump(1) << '\n';
}

struct Common
{
    std::string config_path;
    std::optional<std::uint64_t> seed;
};

struct Checkpointed
{
    GraspModel model;
    json header;
};

Checkpointed open_checkpoint(const std::string& path)
{
    LoadedCheckpoint ck = load_checkpoint(path);
    json header{{"path", path}, {"config", to_json(ck.model.config())}, {"step", ck.step},
                {"init_seed", ck.init_seed}, {"metadata", ck.metadata}};
    return {std::move(ck.model), std::move(header)};
}

RunConfig resolve(const Common& common)
{
    RunConfig c = common.config_path.empty() ? RunConfig{} : load_run_config(common.config_path);
    if (common.seed)
        c.seed = *common.seed;
    c.train.seed = c.seed;
    c.eval.eval_seed = c.seed;
    return c;
}

json provenance(const std::string& command, const RunConfig& config, json extra = json::object())
{
    json j{{"version", kVersion}, {"command", command}, {"config", to_json(config)}};
    for (auto& [k, v] : extra.items())
        j[k] = v;
    return j;
}

} // namespace

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err)
{
    CLI::App app{"GRASP amodal segmentation toolkit", "grasp"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kVersion);

    Common common;
    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", common.config_path, "JSON run config (flags override it)");
        sub->add_option("--seed", common.seed, "Base seed");
    };

    // gen
    auto* gen = app.add_subcommand("gen", "Generate a synthetic occlusion dataset");
    std::string gen_out, gen_split = "train";
    std::optional<std::size_t> gen_size;
    std::size_t gen_n = 1000;
    gen->add_option("--out", gen_out, "Output directory")->required();
    gen->add_option("--n", gen_n, "Number of scenes");
    gen->add_option("--size", gen_size, "Image side length");
    gen->add_option("--split", gen_split, "Split name recorded in the manifest");
    add_common(gen);

    // train
    auto* train_cmd = app.add_subcommand("train", "Train a model on a generated dataset");
    std::string train_data, train_out, loss_csv;
    std::optional<std::size_t> steps, batch, checkpoint_every;
    std::optional<double> lr;
    bool sdf_query_mod = false;
    train_cmd->add_option("--data", train_data, "Dataset directory")->required();
    train_cmd->add_option("--out", train_out, "Checkpoint file")->required();
    train_cmd->add_option("--steps", steps, "Optimizer steps");
    train_cmd->add_option("--batch", batch, "Batch size");
    train_cmd->add_option("--lr", lr, "Initial learning rate");
    train_cmd->add_option("--checkpoint-every", checkpoint_every, "Also save every N steps (0: final only)");
    train_cmd->add_option("--loss-csv", loss_csv, "Loss curve path (default: loss.csv next to the checkpoint)");
    train_cmd->add_flag("--sdf-query-mod", sdf_query_mod, "Add the SDF direction to the prior queries");
    add_common(train_cmd);

    // eval / ablate / stats / probe share checkpoint + data
    std::string ckpt, data_dir, out_path;
    auto add_model_inputs = [&](CLI::App* sub) {
        sub->add_option("--ckpt", ckpt, "Checkpoint file")->required();
        sub->add_option("--data", data_dir, "Dataset directory")->required();
    };

    auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint");
    std::string protocol, occ_mode, dump_gates;
    std::optional<double> gate_override, threshold;
    bool two_pass_flag = false, pp_flag = false;
    add_model_inputs(eval_cmd);
    eval_cmd->add_option("--protocol", protocol, "oracle or standard")->check(CLI::IsMember({"oracle", "standard"}));
    eval_cmd->add_option("--gate-override", gate_override, "Replace every gate value with this constant")
        ->check(CLI::Range(0.0, 1.0));
    eval_cmd->add_flag("--two-pass", two_pass_flag, "Refine the visible mask with a second pass");
    eval_cmd->add_flag("--pp", pp_flag, "Union the amodal prediction with the input visible mask");
    eval_cmd->add_option("--occ-mode", occ_mode, "occ_head or amodal_minus_visible")
        ->check(CLI::IsMember({"occ_head", "amodal_minus_visible"}));
    eval_cmd->add_option("--threshold", threshold, "Probability threshold");
    eval_cmd->add_option("--out", out_path, "Report directory (default: current directory)");
    eval_cmd->add_option("--dump-gates", dump_gates, "Directory for per-instance gate heatmaps");
    add_common(eval_cmd);

    auto* ablate_cmd = app.add_subcommand("ablate", "Gate intervention table for one checkpoint");
    add_model_inputs(ablate_cmd);
    ablate_cmd->add_option("--protocol", protocol, "oracle or standard")->check(CLI::IsMember({"oracle", "standard"}));
    ablate_cmd->add_flag("--two-pass", two_pass_flag, "Refine the visible mask with a second pass");
    ablate_cmd->add_flag("--pp", pp_flag, "Union the amodal prediction with the input visible mask");
    ablate_cmd->add_option("--out", out_path, "CSV path (default: ablation.csv)");
    add_common(ablate_cmd);

    auto* stats_cmd = app.add_subcommand("stats", "Gate and prototype-attention statistics");
    add_model_inputs(stats_cmd);
    stats_cmd->add_option("--out", out_path, "JSON path (default: stats.json)");
    add_common(stats_cmd);

    auto* probe_cmd = app.add_subcommand("probe", "Linear probe of SDF predictability from token features");
    std::optional<double> lambda;
    add_model_inputs(probe_cmd);
    probe_cmd->add_option("--lambda", lambda, "Ridge penalty")->check(CLI::NonNegativeNumber);
    probe_cmd->add_option("--out", out_path, "Output directory (default: current directory)");
    add_common(probe_cmd);

    // sdf
    auto* sdf_cmd = app.add_subcommand("sdf", "Dump the SDF field and gate map of one mask");
    std::string mask_path, sdf_ckpt;
    std::size_t patch = 8;
    double alpha = 2.68, beta = 0.26;
    sdf_cmd->add_option("--mask", mask_path, "Binary mask PGM")->required();
    sdf_cmd->add_option("--out", out_path, "Output directory")->required();
    sdf_cmd->add_option("--patch", patch, "Token patch size");
    sdf_cmd->add_option("--alpha", alpha, "Gate slope");
    sdf_cmd->add_option("--beta", beta, "Gate offset");
    sdf_cmd->add_option("--ckpt", sdf_ckpt, "Take patch size, alpha and beta from a checkpoint");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << (app.get_subcommands().empty() ? app.help() : app.get_subcommands().front()->help());
        return 0;
    } catch (const CLI::CallForVersion&) {
        out << kVersion << '\n';
        return 0;
    } catch (const CLI::ParseError& e) {
        report_error(err, "usage", e.what());
        const auto subs = app.get_subcommands();
        err << (subs.empty() ? app.help() : subs.front()->help());
        return 2;
    }

    try {
        RunConfig config = resolve(common);

        if (gen->parsed()) {
            if (gen_size)
                config.data.image_size = *gen_size;
            config.data.validate();
            Dataset d = make_dataset(config.seed, gen_n, config.data, gen_split);
            d.manifest.provenance = provenance("gen", config, {{"scenes", gen_n}});
            write_dataset(gen_out, d);
            out << "wrote " << d.instances.size() << " instances from " << gen_n << " scenes to " << gen_out << '\n';
            return 0;
        }

        if (train_cmd->parsed()) {
            if (steps)
                config.train.steps = *steps;
            if (batch)
                config.train.batch_size = *batch;
            if (lr)
                config.train.lr = *lr;
            if (checkpoint_every)
                config.train.checkpoint_every = *checkpoint_every;
            if (sdf_query_mod)
                config.model.sdf_query_mod = true;
            config.train.validate();
            Dataset d = read_dataset(train_data);
            config.model.image_size = d.manifest.height;
            config.model.validate();

            const std::uint64_t init_seed = init_seed_for(config.seed);
            GraspModel model(config.model, init_seed);
            TrainOutputs outputs;
            outputs.checkpoint = train_out;
            if (fs::path(train_out).has_parent_path())
                fs::create_directories(fs::path(train_out).parent_path());
            outputs.loss_csv = loss_csv.empty() ? fs::path(train_out).parent_path() / "loss.csv" : fs::path(loss_csv);
            outputs.run_config = provenance("train", config, {{"data", train_data}});
            outputs.init_seed = init_seed;
            const std::size_t every = std::max<std::size_t>(1, config.train.steps / 20);
            outputs.on_step = [&](const LossRecord& r) {
                if (r.step % every == 0 || r.step + 1 == config.train.steps)
                    out << "step " << r.step << " lr " << r.lr << " loss " << r.loss.total << '\n' << std::flush;
            };
            const auto t0 = std::chrono::steady_clock::now();
            train(model, d.instances, config.train, outputs);
            const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            out << "saved " << train_out << " after " << config.train.steps << " steps in " << seconds << " s\n";
            return 0;
        }

        if (eval_cmd->parsed() || ablate_cmd->parsed()) {
            if (!protocol.empty())
                config.eval.protocol = protocol_from_string(protocol);
            if (gate_override)
                config.eval.gate_override = gate_override;
            if (two_pass_flag)
                config.eval.use_two_pass = true;
            if (pp_flag)
                config.eval.use_pp = true;
            if (!occ_mode.empty())
                config.eval.occ_mode = occ_mode_from_string(occ_mode);
            if (threshold)
                config.eval.threshold = *threshold;
            auto ck = open_checkpoint(ckpt);
            const Dataset d = read_dataset(data_dir);
            json run = provenance(eval_cmd->parsed() ? "eval" : "ablate", config,
                                  {{"checkpoint", ck.header}, {"data", data_dir}});
            run["config"]["model"] = ck.header["config"];

            if (ablate_cmd->parsed()) {
                const Ablation a = ablate(ck.model, d.instances, config.eval);
                const fs::path path = out_path.empty() ? fs::path("ablation.csv") : fs::path(out_path);
                if (path.has_parent_path())
                    fs::create_directories(path.parent_path());
                write_ablation_csv(path, a, run);
                for (const auto& row : a.rows)
                    out << row.setting << " full_miou " << row.report.full_miou << " occ_miou "
                        << row.report.occ_miou.value_or(0.0) << '\n';
                return 0;
            }

            const EvalReport report = evaluate(ck.model, d.instances, config.eval);
            const fs::path dir = out_path.empty() ? fs::path(".") : fs::path(out_path);
            write_report(dir, report, run);
            if (!dump_gates.empty()) {
                fs::create_directories(dump_gates);
                const GraspModel effective = with_gate_override(ck.model, config.eval.gate_override);
                const std::size_t grid = effective.config().grid();
                for (const auto& inst : d.instances) {
                    const BinaryMask v = config.eval.protocol == Protocol::Oracle
                                             ? inst.visible
                                             : standard_vm(inst, config.eval.eval_seed);
                    const Prediction p = predict(effective, *inst.image, v, config.eval.threshold);
                    write_heatmap(fs::path(dump_gates) / instance_file_name("gate", inst.id), grid, grid, p.gate, 0.0,
                                  1.0, std::string(kVersion) + " gate instance " + std::to_string(inst.id));
                }
            }
            out << report.protocol << " full_miou " << report.full_miou << " occ_miou "
                << report.occ_miou.value_or(0.0) << " instances " << report.rows.size() << '\n';
            return 0;
        }

        if (stats_cmd->parsed()) {
            auto ck = open_checkpoint(ckpt);
            const Dataset d = read_dataset(data_dir);
            const EvalReport report = evaluate(ck.model, d.instances, EvalOptions{});
            json j = provenance("stats", config, {{"checkpoint", ck.header}, {"data", data_dir}});
            j["config"]["model"] = ck.header["config"];
            j["gate"] = to_json(*report.gate);
            j["attention"] = to_json(*report.attention);
            j["gate_alpha"] = ck.model.params().gate_alpha.item();
            j["gate_beta"] = ck.model.params().gate_beta.item();
            j["gamma"] = ck.model.params().gamma.item();
            write_json(out_path.empty() ? fs::path("stats.json") : fs::path(out_path), j);
            out << j["gate"].dump() << '\n' << j["attention"]["jsd_bits"] << '\n';
            return 0;
        }

        if (probe_cmd->parsed()) {
            if (lambda)
                config.probe_lambda = *lambda;
            auto ck = open_checkpoint(ckpt);
            const Dataset d = read_dataset(data_dir);
            ProbeOptions options;
            options.lambda = config.probe_lambda;
            options.seed = config.seed;
            const ProbeReport report = probe_report(ck.model, d.instances, options);
            json run = provenance("probe", config, {{"checkpoint", ck.header}, {"data", data_dir}});
            run["config"]["model"] = ck.header["config"];
            write_probe_report(out_path.empty() ? fs::path(".") : fs::path(out_path), report, run);
            for (const auto& r : report.results)
                out << to_string(r.position) << " r2 " << (r.r2 ? std::to_string(*r.r2) : "undefined") << " sign_acc "
                    << r.sign_accuracy << '\n';
            return 0;
        }

        if (sdf_cmd->parsed()) {
            if (!sdf_ckpt.empty()) {
                auto ck = open_checkpoint(sdf_ckpt);
                patch = ck.model.config().patch_size;
                alpha = ck.model.params().gate_alpha.item();
                beta = ck.model.params().gate_beta.item();
            }
            const BinaryMask mask = read_mask(mask_path);
            if (patch == 0 || mask.height() % patch != 0 || mask.width() % patch != 0)
                throw ConfigError("patch size " + std::to_string(patch) + " does not divide the " +
                                  std::to_string(mask.height()) + "x" + std::to_string(mask.width()) + " mask");
            const SdfField field = sdf(mask);
            const std::size_t gh = mask.height() / patch, gw = mask.width() / patch;
            const auto tokens = pool_to_grid(field, gh, gw);
            const auto gates = gate_values(tokens, alpha, beta);
            double extent = 1e-12;
            for (double v : field.normalized)
                extent = std::max(extent, std::abs(v));
            const fs::path dir(out_path);
            fs::create_directories(dir);
            const std::string tag = std::string(kVersion) + " sdf of " + mask_path;
            write_heatmap(dir / "sdf.pgm", mask.height(), mask.width(), field.normalized, -extent, extent, tag);
            write_heatmap(dir / "gate.pgm", gh, gw, gates, 0.0, 1.0, tag);
            write_json(dir / "sdf.json", {{"version", kVersion},
                                          {"mask", mask_path},
                                          {"patch", patch},
                                          {"alpha", alpha},
                                          {"beta", beta},
                                          {"diagonal", field.diagonal},
                                          {"sdf_tokens", tokens},
                                          {"gate", gates}});
            out << "wrote sdf.pgm, gate.pgm and sdf.json to " << dir.string() << '\n';
            return 0;
        }
    } catch (const ConfigError& e) {
        report_error(err, e.kind(), e.what());
        return 2;
    } catch (const Error& e) {
        report_error(err, e.kind(), e.what());
        return 1;
    } catch (const std::filesystem::filesystem_error& e) {
        report_error(err, "io", e.what());
        return 1;
    } catch (const std::exception& e) {
        report_error(err, "internal", e.what());
        return 1;
    }
    return 2;
}

int dispatch(int argc, const char* const* argv)
{
    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i)
        args.emplace_back(argv[i]);
    return dispatch(args, std::cout, std::cerr);
}

} // namespace grasp
