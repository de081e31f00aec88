#include "commands.hpp"

#include <stda/checkpoint.hpp>
#include <stda/city_io.hpp>
#include <stda/errors.hpp>

#include <CLI11.hpp>
#include <openssl/evp.h>

#include <algorithm>
#include <array>
#include <charconv>
#include <fstream>
#include <iostream>
#include <sstream>

namespace stda::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::ostream* g_info = &std::cerr;

void info(const std::string& line)
{
    if (g_info)
        *g_info << line << '\n';
}

// Shortest text that reads back to the same double.
std::string num(double v)
{
    std::array<char, 32> buf{};
    auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    return std::string(buf.data(), end);
}

std::ofstream open_out(const fs::path& file)
{
    std::ofstream out(file, std::ios::binary | std::ios::trunc);
    if (!out)
        throw Error("cannot write " + file.string());
    return out;
}

void write_json(const json& doc, const fs::path& file)
{
    auto out = open_out(file);
    out << doc.dump(2) << '\n';
}

fs::path seed_dir(const fs::path& root, Variant v, std::uint64_t seed)
{
    return root / std::string(variant_name(v)) / ("seed_" + std::to_string(seed));
}

// Source cities are only resolved for variants that read them.
struct LoadedData {
    std::optional<TrainingData> with_sources;
    std::optional<TrainingData> target_only;

    const TrainingData& for_variant(Variant v) const
    {
        return v == Variant::TargetOnly ? *target_only : *with_sources;
    }
};

LoadedData load_data(const ExperimentConfig& config, std::span<const Variant> variants)
{
    const bool need_sources = std::any_of(variants.begin(), variants.end(),
                                          [](Variant v) { return v != Variant::TargetOnly; });
    const bool need_target_only = std::find(variants.begin(), variants.end(), Variant::TargetOnly) != variants.end();
    CityData target = resolve_city(config.target);
    LoadedData out;
    if (need_sources) {
        if (config.sources.empty())
            throw ConfigError("sources: transfer variants need at least one source city");
        std::vector<CityData> sources;
        for (const auto& s : config.sources)
            sources.push_back(resolve_city(s));
        for (const auto& s : sources)
            if (s.series.interval_minutes != target.series.interval_minutes)
                throw ConfigError("source " + s.series.city_id + " has a different sampling interval than the target");
        out.with_sources.emplace(std::move(sources), target, config.adapt_days, config.model);
    }
    if (need_target_only) {
        info("audit: target_only ignores " + std::to_string(config.sources.size()) + " source path(s)");
        out.target_only.emplace(std::vector<CityData>{}, target, config.adapt_days, config.model);
    }
    return out;
}

struct RunOutcome {
    TrainState state;
    HorizonReport report;
    std::vector<double> query_curve;
};

// Base stage, checkpoints, adaptation and evaluation for one (variant, seed).
RunOutcome run_one(const ExperimentConfig& config, const TrainingData& data, Variant variant, const MetaConfig& meta,
                   const fs::path& dir)
{
    fs::create_directories(dir);
    RunOutcome out;
    {
        auto log = open_out(dir / "steps.jsonl");
        out.state = train_variant(variant, data, config.model, meta, [&](const StepLog& s) {
            log << json{{"step", s.step},
                        {"mean_query_loss", s.mean_query_loss},
                        {"l_st", s.l_st},
                        {"l_p", s.l_p},
                        {"wall_ms", s.wall_ms}}
                       .dump()
                << '\n';
            out.query_curve.push_back(s.mean_query_loss);
        });
    }
    save_params_binary(out.state.theta, dir / "base.bin");
    save_params_binary(out.state.disc, dir / "disc.bin");
    adapt_on_split(out.state, data, config.model, meta);
    save_params_binary(out.state.theta, dir / "adapted.bin");
    out.report = evaluate_target(out.state.theta, data, config.model, config.horizons, config.eval_stride);
    write_report_csv(out.report, dir / "report.csv");
    write_json(report_json(out.report), dir / "report.json");
    return out;
}

json run_json(std::uint64_t seed, const RunOutcome& r)
{
    return json{{"seed", seed},
                {"steps_run", r.state.step},
                {"best_step", r.state.best_step},
                {"adapted_steps", r.state.adapted_steps},
                {"query_loss", r.query_curve},
                {"report", report_json(r.report)}};
}

json aggregate(const std::vector<HorizonReport>& reports)
{
    std::vector<double> maes, rmses;
    for (const auto& r : reports) {
        maes.push_back(r.mean_mae());
        rmses.push_back(r.mean_rmse());
    }
    const auto m = mean_std(maes), r = mean_std(rmses);
    json horizons = json::array();
    for (std::size_t k = 0; k < reports.front().rows.size(); ++k) {
        std::vector<double> hm, hr;
        for (const auto& rep : reports) {
            hm.push_back(rep.rows[k].mae);
            hr.push_back(rep.rows[k].rmse);
        }
        const auto a = mean_std(hm), b = mean_std(hr);
        horizons.push_back(json{{"horizon_min", reports.front().rows[k].minutes},
                                {"mae_mean", a.mean},
                                {"mae_std", a.std},
                                {"rmse_mean", b.mean},
                                {"rmse_std", b.std}});
    }
    return json{{"mae_mean", m.mean}, {"mae_std", m.std}, {"rmse_mean", r.mean}, {"rmse_std", r.std},
                {"horizons", horizons}};
}

MetaConfig meta_for_seed(const ExperimentConfig& config, std::uint64_t seed)
{
    MetaConfig m = config.meta;
    m.seed = seed;
    return m;
}

void finish(const ExperimentConfig& config, const fs::path& dir)
{
    write_json(to_json(config), dir / "config.json");
    write_manifest(dir);
}

} // namespace

void set_info_stream(std::ostream* out) { g_info = out; }

std::string sha256_file(const fs::path& file)
{
    std::ifstream in(file, std::ios::binary);
    if (!in)
        throw Error("cannot read " + file.string());
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    if (!ctx || EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1) {
        EVP_MD_CTX_free(ctx);
        throw Error("sha256: digest initialisation failed");
    }
    std::array<char, 1 << 16> buf{};
    while (in) {
        in.read(buf.data(), buf.size());
        if (in.gcount() > 0)
            EVP_DigestUpdate(ctx, buf.data(), static_cast<std::size_t>(in.gcount()));
    }
    std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx, md.data(), &len);
    EVP_MD_CTX_free(ctx);
    static constexpr char hex[] = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
        out += hex[md[i] >> 4];
        out += hex[md[i] & 0xF];
    }
    return out;
}

json write_manifest(const fs::path& dir)
{
    std::vector<fs::path> files;
    for (const auto& e : fs::recursive_directory_iterator(dir))
        if (e.is_regular_file() && e.path() != dir / "manifest.json")
            files.push_back(fs::relative(e.path(), dir));
    std::sort(files.begin(), files.end());
    json list = json::array();
    for (const auto& f : files)
        list.push_back(json{{"path", f.generic_string()},
                            {"bytes", fs::file_size(dir / f)},
                            {"sha256", sha256_file(dir / f)}});
    json doc{{"files", list}};
    write_json(doc, dir / "manifest.json");
    return doc;
}

void prepare_output(const fs::path& dir, bool force)
{
    if (fs::exists(dir)) {
        if (!fs::is_directory(dir))
            throw ConfigError("output path " + dir.string() + " exists and is not a directory");
        if (!fs::is_empty(dir) && !force)
            throw ConfigError("output directory " + dir.string() + " is not empty (use --force to overwrite)");
    }
    fs::create_directories(dir);
}

void write_report_csv(const HorizonReport& report, const fs::path& file)
{
    auto out = open_out(file);
    out << "horizon_min,mae,rmse,n\n";
    for (const auto& r : report.rows)
        out << r.minutes << ',' << num(r.mae) << ',' << num(r.rmse) << ',' << r.n << '\n';
}

json report_json(const HorizonReport& report)
{
    json rows = json::array();
    for (const auto& r : report.rows)
        rows.push_back(json{{"step", r.step},
                            {"horizon_min", r.minutes},
                            {"mae", r.mae},
                            {"rmse", r.rmse},
                            {"mae_norm", r.mae_norm},
                            {"rmse_norm", r.rmse_norm},
                            {"n", r.n}});
    return json{{"zero_shot", report.zero_shot},
                {"rows", rows},
                {"mean_mae", report.mean_mae()},
                {"mean_rmse", report.mean_rmse()}};
}

std::vector<fs::path> cmd_synth(const ExperimentConfig& config, bool force)
{
    std::vector<SynthConfig> specs;
    for (const auto& s : config.sources)
        if (s.synth)
            specs.push_back(*s.synth);
    if (config.target.synth)
        specs.push_back(*config.target.synth);
    if (specs.empty())
        throw ConfigError("synth: the config has no synthetic city specs");
    const auto cities = synth_cities(specs);
    prepare_output(config.output_dir, force);
    std::vector<fs::path> dirs;
    for (const auto& city : cities) {
        const auto dir = config.output_dir / city.series.city_id;
        fs::create_directories(dir);
        write_city(city, CityFiles::in_directory(dir));
        dirs.push_back(dir);
        info("synth: wrote " + dir.string());
    }
    write_manifest(config.output_dir);
    return dirs;
}

json cmd_train(const ExperimentConfig& config, bool force)
{
    prepare_output(config.output_dir, force);
    const std::array<Variant, 1> variants{config.variant};
    const auto data = load_data(config, variants);
    const auto& td = data.for_variant(config.variant);
    json runs = json::array();
    std::vector<HorizonReport> reports;
    for (const auto seed : config.seeds) {
        info("train: " + std::string(variant_name(config.variant)) + " seed " + std::to_string(seed));
        const auto r = run_one(config, td, config.variant, meta_for_seed(config, seed),
                               seed_dir(config.output_dir, config.variant, seed));
        runs.push_back(run_json(seed, r));
        reports.push_back(r.report);
    }
    json summary{{"variant", variant_name(config.variant)},
                 {"seeds", config.seeds},
                 {"runs", runs},
                 {"summary", aggregate(reports)},
                 {"audit", {{"source_reads", td.source_reads()}, {"sources_loaded", config.variant != Variant::TargetOnly}}}};
    write_json(summary, config.output_dir / "summary.json");
    finish(config, config.output_dir);
    return summary;
}

json cmd_eval(const ExperimentConfig& config, const fs::path& checkpoint, bool force)
{
    if (!fs::exists(checkpoint))
        throw LoadError("checkpoint not found: " + checkpoint.string());
    ParamSet theta = checkpoint.extension() == ".json" ? load_params_json(checkpoint) : load_params_binary(checkpoint);
    const auto expected = init_theta(config.model, 0);
    if (!theta.same_layout(expected))
        throw ContractError("checkpoint " + checkpoint.string() + " does not match the configured model dimensions");
    prepare_output(config.output_dir, force);
    const std::array<Variant, 1> variants{config.variant};
    const auto data = load_data(config, variants);
    const auto& td = data.for_variant(config.variant);

    TrainState state;
    state.theta = std::move(theta);
    adapt_on_split(state, td, config.model, meta_for_seed(config, config.seeds.front()));
    const auto report = evaluate_target(state.theta, td, config.model, config.horizons, config.eval_stride);
    write_report_csv(report, config.output_dir / "report.csv");
    auto doc = report_json(report);
    doc["checkpoint"] = checkpoint.string();
    doc["adapt_days"] = config.adapt_days;
    doc["adapted_steps"] = state.adapted_steps;
    write_json(doc, config.output_dir / "report.json");
    finish(config, config.output_dir);
    return doc;
}

json cmd_ablate(const ExperimentConfig& config, bool force)
{
    prepare_output(config.output_dir, force);
    const auto variants = all_variants();
    const auto data = load_data(config, variants);
    info("ablate: shared seeds " + json(config.seeds).dump() + " across " + std::to_string(variants.size())
         + " variants");

    auto per_seed = open_out(config.output_dir / "per_seed.csv");
    per_seed << "variant,seed,mae,rmse\n";
    auto table = open_out(config.output_dir / "comparison.csv");
    table << "variant,mae_mean,mae_std,rmse_mean,rmse_std,runs\n";
    json results = json::object();
    for (const auto v : variants) {
        const auto& td = data.for_variant(v);
        std::vector<HorizonReport> reports;
        json runs = json::array();
        for (const auto seed : config.seeds) {
            info("ablate: " + std::string(variant_name(v)) + " seed " + std::to_string(seed));
            const auto r = run_one(config, td, v, meta_for_seed(config, seed), seed_dir(config.output_dir, v, seed));
            per_seed << variant_name(v) << ',' << seed << ',' << num(r.report.mean_mae()) << ','
                     << num(r.report.mean_rmse()) << '\n';
            runs.push_back(run_json(seed, r));
            reports.push_back(r.report);
        }
        const auto agg = aggregate(reports);
        table << variant_name(v) << ',' << num(agg["mae_mean"].get<double>()) << ','
              << num(agg["mae_std"].get<double>()) << ',' << num(agg["rmse_mean"].get<double>()) << ','
              << num(agg["rmse_std"].get<double>()) << ',' << reports.size() << '\n';
        results[std::string(variant_name(v))] = json{{"runs", runs}, {"summary", agg}};
    }
    per_seed.close();
    table.close();
    json summary{{"seeds", config.seeds},
                 {"variants", results},
                 {"audit",
                  {{"target_only_source_reads", data.target_only->source_reads()},
                   {"shared_seeds", config.seeds}}}};
    write_json(summary, config.output_dir / "summary.json");
    finish(config, config.output_dir);
    return summary;
}

json cmd_sweep(const ExperimentConfig& config, const std::vector<double>& lambdas, bool force)
{
    if (lambdas.empty())
        throw ConfigError("sweep: empty lambda list");
    prepare_output(config.output_dir, force);
    const std::array<Variant, 1> variants{Variant::Full};
    const auto data = load_data(config, variants);
    const auto result = lambda_sweep(lambdas, config.seeds, data.for_variant(Variant::Full), config.model,
                                     config.meta, config.horizons, config.eval_stride, [](const SweepPoint& p) {
                                         info("sweep: lambda " + num(p.lambda) + " seed " + std::to_string(p.seed)
                                              + " mae " + num(p.mae));
                                     });
    {
        auto csv = open_out(config.output_dir / "sweep.csv");
        csv << "lambda,mae,rmse\n";
        for (const auto& row : result.table)
            csv << num(row.lambda) << ',' << num(row.mae) << ',' << num(row.rmse) << '\n';
        auto pts = open_out(config.output_dir / "sweep_points.csv");
        pts << "lambda,seed,mae,rmse\n";
        for (const auto& p : result.points)
            pts << num(p.lambda) << ',' << p.seed << ',' << num(p.mae) << ',' << num(p.rmse) << '\n';
    }
    json curves = json::array();
    std::size_t interior = 0;
    for (std::size_t s = 0; s < config.seeds.size(); ++s) {
        std::vector<double> curve;
        for (std::size_t l = 0; l < lambdas.size(); ++l)
            curve.push_back(result.points[l * config.seeds.size() + s].mae);
        const bool inside = interior_minimum(curve);
        interior += inside ? 1 : 0;
        curves.push_back(json{{"seed", config.seeds[s]}, {"mae", curve}, {"interior_minimum", inside}});
    }
    json summary{{"variant", "full"},
                 {"lambdas", lambdas},
                 {"seeds", config.seeds},
                 {"per_seed", curves},
                 {"interior_minimum_seeds", interior}};
    write_json(summary, config.output_dir / "summary.json");
    finish(config, config.output_dir);
    return summary;
}

namespace {

std::vector<double> parse_lambda_list(const std::string& text)
{
    std::vector<double> out;
    std::stringstream in(text);
    std::string item;
    while (std::getline(in, item, ',')) {
        if (item.empty())
            continue;
        double v = 0.0;
        const auto [end, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
        if (ec != std::errc() || end != item.data() + item.size())
            throw ConfigError("--lambdas: '" + item + "' is not a number");
        if (!(v >= 0.0))
            throw ConfigError("--lambdas: values must be non-negative");
        out.push_back(v);
    }
    return out;
}

void emit_error(std::ostream& err, const std::string& kind, const std::string& message)
{
    err << json{{"error", {{"kind", kind}, {"message", message}}}}.dump() << '\n';
}

} // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err)
{
    CLI::App app{"Few-shot spatio-temporal traffic forecasting with meta-learned transfer", "stda"};
    app.require_subcommand(1);
    app.fallthrough();

    std::string config_path, out_dir, checkpoint;
    std::vector<std::string> sets;
    std::optional<std::string> lambdas_text;
    bool force = false;
    app.add_option("--config", config_path, "experiment config (JSON)");
    app.add_option("--set", sets, "override a config field, e.g. meta.lambda=1.0")
        ->expected(1)
        ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
    app.add_option("--out", out_dir, "output directory (overrides output_dir)");
    app.add_flag("--force", force, "write into a non-empty output directory");

    auto* synth = app.add_subcommand("synth", "generate synthetic city datasets");
    auto* train = app.add_subcommand("train", "train the configured variant for every seed");
    auto* eval = app.add_subcommand("eval", "adapt a checkpoint on the target city and evaluate");
    eval->add_option("--checkpoint", checkpoint, "parameter checkpoint (.bin or .json)")->required();
    auto* ablate = app.add_subcommand("ablate", "compare all variants on shared seeds");
    auto* sweep = app.add_subcommand("sweep", "sweep the domain-loss weight lambda");
    sweep->add_option("--lambdas", lambdas_text, "comma-separated lambda values");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) {
            out << app.help();
            return 0;
        }
        emit_error(err, "usage", e.what());
        return 2;
    }

    try {
        auto overrides = sets;
        if (!out_dir.empty())
            overrides.push_back("output_dir=" + json(out_dir).dump());
        const auto config = load_config(config_path, overrides);
        json result;
        if (synth->parsed()) {
            json dirs = json::array();
            for (const auto& d : cmd_synth(config, force))
                dirs.push_back(d.string());
            result = json{{"command", "synth"}, {"cities", dirs}};
        } else if (train->parsed()) {
            const auto s = cmd_train(config, force);
            result = json{{"command", "train"}, {"summary", s["summary"]}};
        } else if (eval->parsed()) {
            result = json{{"command", "eval"}, {"report", cmd_eval(config, checkpoint, force)}};
        } else if (ablate->parsed()) {
            cmd_ablate(config, force);
            result = json{{"command", "ablate"}, {"comparison", (config.output_dir / "comparison.csv").string()}};
        } else if (sweep->parsed()) {
            const auto lambdas = lambdas_text ? parse_lambda_list(*lambdas_text) : config.lambdas;
            if (lambdas.empty()) {
                emit_error(err, "usage", "sweep: empty lambda list");
                return 2;
            }
            const auto s = cmd_sweep(config, lambdas, force);
            result = json{{"command", "sweep"}, {"interior_minimum_seeds", s["interior_minimum_seeds"]}};
        }
        result["output_dir"] = config.output_dir.string();
        out << result.dump() << '\n';
        return 0;
    } catch (const Error& e) {
        emit_error(err, e.kind(), e.what());
    } catch (const std::exception& e) {
        emit_error(err, "internal", e.what());
    }
    return 1;
}

} // namespace stda::cli
