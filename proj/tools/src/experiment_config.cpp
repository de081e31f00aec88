#include "experiment_config.hpp"

#include <stda/city_io.hpp>
#include <stda/errors.hpp>

#include <fstream>
#include <set>
#include <type_traits>
#include <sstream>

namespace stda::cli {

using nlohmann::json;

namespace {

// Reads fields of one JSON object and remembers which were consumed so
// leftovers can be reported as unknown.
class ObjectReader {
public:
    ObjectReader(const json& obj, std::string where) : obj_(obj), where_(std::move(where))
    {
        if (!obj_.is_object())
            throw ConfigError(where_ + ": expected an object");
    }

    bool has(const char* key) const { return obj_.contains(key); }

    const json& raw(const char* key)
    {
        seen_.insert(key);
        return obj_.at(key);
    }

    template <class T>
    void read(const char* key, T& out)
    {
        if (!obj_.contains(key))
            return;
        seen_.insert(key);
        try {
            out = obj_.at(key).get<T>();
        } catch (const json::exception&) {
            throw ConfigError(field(key) + ": wrong type (" + obj_.at(key).dump() + ")");
        }
    }

    template <class T>
    void read_positive(const char* key, T& out)
    {
        read_non_negative(key, out);
        if (!(out > T{}))
            throw ConfigError(field(key) + ": must be positive");
    }

    template <class T>
    void read_non_negative(const char* key, T& out)
    {
        if (obj_.contains(key) && obj_.at(key).is_number() && obj_.at(key).get<double>() < 0.0)
            throw ConfigError(field(key) + ": must be non-negative");
        if constexpr (std::is_integral_v<T>)
            if (obj_.contains(key) && obj_.at(key).is_number_float())
                throw ConfigError(field(key) + ": must be an integer");
        read(key, out);
    }

    std::string field(const char* key) const { return where_.empty() ? key : where_ + "." + key; }

    void finish() const
    {
        for (const auto& [key, value] : obj_.items())
            if (!seen_.contains(key))
                throw ConfigError("unknown config field '" + field(key.c_str()) + "'");
    }

private:
    const json& obj_;
    std::string where_;
    std::set<std::string> seen_;
};

SynthConfig parse_synth(const json& j, const std::string& where)
{
    SynthConfig s;
    ObjectReader r(j, where);
    r.read("city_id", s.city_id);
    r.read_positive("n_nodes", s.n_nodes);
    r.read_positive("n_days", s.n_days);
    r.read_positive("interval_minutes", s.interval_minutes);
    r.read("seed", s.seed);
    r.read("base_speed", s.base_speed);
    r.read_non_negative("diurnal_amplitude", s.diurnal_amplitude);
    r.read_non_negative("wave_rate", s.wave_rate);
    r.read_non_negative("wave_depth", s.wave_depth);
    r.read_non_negative("wave_decay", s.wave_decay);
    r.read_non_negative("noise_std", s.noise_std);
    r.read_positive("radius", s.radius);
    r.finish();
    if (s.city_id.empty())
        throw ConfigError(where + ".city_id: must not be empty");
    return s;
}

CitySpec parse_city(const json& j, const std::string& where, const std::filesystem::path& base_dir)
{
    ObjectReader r(j, where);
    CitySpec spec;
    if (r.has("path") == r.has("synth"))
        throw ConfigError(where + ": give exactly one of 'path' or 'synth'");
    if (r.has("path")) {
        std::string p;
        r.read("path", p);
        std::filesystem::path path(p);
        spec.path = path.is_absolute() ? path : base_dir / path;
    } else {
        spec.synth = parse_synth(r.raw("synth"), where + ".synth");
    }
    r.finish();
    return spec;
}

json city_to_json(const CitySpec& c)
{
    if (c.path)
        return json{{"path", c.path->string()}};
    return json{{"synth", to_json(*c.synth)}};
}

bool same_city(const CitySpec& a, const CitySpec& b)
{
    if (a.path && b.path)
        return std::filesystem::weakly_canonical(*a.path) == std::filesystem::weakly_canonical(*b.path);
    if (a.synth && b.synth)
        return a.synth->seed == b.synth->seed || a.synth->city_id == b.synth->city_id;
    return false;
}

const char* mode_name(SandwichMode m) { return m == SandwichMode::Sequence ? "sequence" : "final_state"; }

} // namespace

std::string CitySpec::label() const
{
    if (path)
        return path->string();
    return "synth:" + synth->city_id;
}

json to_json(const SynthConfig& s)
{
    return json{{"city_id", s.city_id},
                {"n_nodes", s.n_nodes},
                {"n_days", s.n_days},
                {"interval_minutes", s.interval_minutes},
                {"seed", s.seed},
                {"base_speed", s.base_speed},
                {"diurnal_amplitude", s.diurnal_amplitude},
                {"wave_rate", s.wave_rate},
                {"wave_depth", s.wave_depth},
                {"wave_decay", s.wave_decay},
                {"noise_std", s.noise_std},
                {"radius", s.radius}};
}

json to_json(const ExperimentConfig& c)
{
    json sources = json::array();
    for (const auto& s : c.sources)
        sources.push_back(city_to_json(s));
    const auto& m = c.meta;
    return json{
        {"sources", sources},
        {"target", city_to_json(c.target)},
        {"history", c.model.history},
        {"horizon", c.model.horizon},
        {"horizons", c.horizons},
        {"model",
         {{"hidden", c.model.encoder.hidden},
          {"heads", c.model.encoder.heads},
          {"leaky_slope", c.model.encoder.leaky_slope},
          {"mode", mode_name(c.model.encoder.mode)}}},
        {"meta",
         {{"alpha", m.alpha},
          {"beta", m.beta},
          {"task_batch", m.task_batch},
          {"lambda", m.lambda},
          {"inner_steps", m.inner_steps},
          {"meta_steps", m.meta_steps},
          {"maml_order", m.maml_order == MamlOrder::First ? "first" : "second"},
          {"loss", m.loss_form == LossForm::Rmse ? "rmse" : "mse"},
          {"disc_lr", m.disc_lr},
          {"train_discriminator", m.train_discriminator},
          {"support_size", m.support_size},
          {"query_size", m.query_size},
          {"target_batch", m.target_batch},
          {"adapt_steps", m.adapt_steps},
          {"adapt_batch", m.adapt_batch},
          {"selection_window", m.selection_window},
          {"patience", m.patience}}},
        {"variant", std::string(variant_name(c.variant))},
        {"adapt_days", c.adapt_days},
        {"seeds", c.seeds},
        {"lambdas", c.lambdas},
        {"eval_stride", c.eval_stride},
        {"output_dir", c.output_dir.string()},
    };
}

json default_config_json()
{
    ExperimentConfig c;
    for (std::uint64_t k = 0; k < 3; ++k) {
        SynthConfig s;
        s.city_id = "source" + std::to_string(k);
        s.seed = 101 + k;
        c.sources.push_back(CitySpec{std::nullopt, s});
    }
    SynthConfig t;
    t.city_id = "target";
    t.seed = 201;
    c.target = CitySpec{std::nullopt, t};
    auto doc = to_json(c);
    doc["output_dir"] = "runs";
    return doc;
}

void apply_override(json& doc, std::string_view assignment)
{
    const auto eq = assignment.find('=');
    if (eq == std::string_view::npos || eq == 0)
        throw ConfigError("--set expects key=value, got '" + std::string(assignment) + "'");
    const std::string key(assignment.substr(0, eq));
    const std::string text(assignment.substr(eq + 1));
    json value = json::parse(text, nullptr, false);
    if (value.is_discarded())
        value = text;

    json* node = &doc;
    std::string path;
    std::istringstream parts(key);
    std::string part;
    std::vector<std::string> segments;
    while (std::getline(parts, part, '.'))
        segments.push_back(part);
    for (std::size_t i = 0; i < segments.size(); ++i) {
        const auto& seg = segments[i];
        if (seg.empty())
            throw ConfigError("--set: empty path segment in '" + key + "'");
        path += (path.empty() ? "" : ".") + seg;
        const bool last = i + 1 == segments.size();
        if (node->is_array()) {
            std::size_t idx = 0;
            try {
                idx = std::stoul(seg);
            } catch (const std::exception&) {
                throw ConfigError("--set: '" + path + "' indexes an array with a non-number");
            }
            if (idx >= node->size())
                throw ConfigError("--set: index out of range at '" + path + "'");
            node = &(*node)[idx];
        } else {
            if (!node->is_object())
                throw ConfigError("--set: '" + path + "' is not inside an object");
            if (!node->contains(seg))
                throw ConfigError("unknown config field '" + path + "'");
            node = &(*node)[seg];
        }
        if (last) {
            if (node->is_object() || node->is_array()) {
                if (!value.is_structured())
                    throw ConfigError("--set: '" + path + "' is structured; give a JSON value");
            } else if (value.is_structured()) {
                throw ConfigError("--set: '" + path + "' is a scalar field");
            }
            *node = value;
        }
    }
}

ExperimentConfig parse_config(const json& doc, const std::filesystem::path& base_dir)
{
    ExperimentConfig c;
    ObjectReader r(doc, "");

    if (r.has("sources")) {
        const auto& src = r.raw("sources");
        if (!src.is_array())
            throw ConfigError("sources: expected a list");
        for (std::size_t i = 0; i < src.size(); ++i)
            c.sources.push_back(parse_city(src[i], "sources." + std::to_string(i), base_dir));
    }
    if (!r.has("target"))
        throw ConfigError("target: required");
    c.target = parse_city(r.raw("target"), "target", base_dir);

    r.read_positive("history", c.model.history);
    r.read_positive("horizon", c.model.horizon);
    r.read("horizons", c.horizons);
    if (c.horizons.empty())
        throw ConfigError("horizons: must not be empty");
    for (auto h : c.horizons)
        if (h < 1 || h > c.model.horizon)
            throw ConfigError("horizons: " + std::to_string(h) + " outside [1, horizon]");

    if (r.has("model")) {
        ObjectReader m(r.raw("model"), "model");
        m.read_positive("hidden", c.model.encoder.hidden);
        m.read_positive("heads", c.model.encoder.heads);
        m.read_non_negative("leaky_slope", c.model.encoder.leaky_slope);
        std::string mode = mode_name(c.model.encoder.mode);
        m.read("mode", mode);
        if (mode == "sequence")
            c.model.encoder.mode = SandwichMode::Sequence;
        else if (mode == "final_state")
            c.model.encoder.mode = SandwichMode::FinalState;
        else
            throw ConfigError("model.mode: expected 'sequence' or 'final_state'");
        m.finish();
    }

    if (r.has("meta")) {
        auto& t = c.meta;
        ObjectReader m(r.raw("meta"), "meta");
        m.read_non_negative("alpha", t.alpha);
        m.read_positive("beta", t.beta);
        m.read_positive("task_batch", t.task_batch);
        m.read_non_negative("lambda", t.lambda);
        m.read_non_negative("inner_steps", t.inner_steps);
        m.read_non_negative("meta_steps", t.meta_steps);
        std::string order = t.maml_order == MamlOrder::First ? "first" : "second";
        m.read("maml_order", order);
        if (order != "first" && order != "second")
            throw ConfigError("meta.maml_order: expected 'first' or 'second'");
        t.maml_order = order == "first" ? MamlOrder::First : MamlOrder::Second;
        std::string loss = t.loss_form == LossForm::Rmse ? "rmse" : "mse";
        m.read("loss", loss);
        if (loss != "rmse" && loss != "mse")
            throw ConfigError("meta.loss: expected 'rmse' or 'mse'");
        t.loss_form = loss == "rmse" ? LossForm::Rmse : LossForm::Mse;
        m.read_non_negative("disc_lr", t.disc_lr);
        m.read("train_discriminator", t.train_discriminator);
        m.read_positive("support_size", t.support_size);
        m.read_positive("query_size", t.query_size);
        m.read_positive("target_batch", t.target_batch);
        m.read_non_negative("adapt_steps", t.adapt_steps);
        m.read_positive("adapt_batch", t.adapt_batch);
        m.read_positive("selection_window", t.selection_window);
        m.read_non_negative("patience", t.patience);
        if (m.has("seed"))
            throw ConfigError("meta.seed: seeds come from the top-level 'seeds' list");
        m.finish();
    }

    std::string variant(variant_name(c.variant));
    r.read("variant", variant);
    c.variant = parse_variant(variant);
    r.read_non_negative("adapt_days", c.adapt_days);
    r.read("seeds", c.seeds);
    if (c.seeds.empty())
        throw ConfigError("seeds: must not be empty");
    if (std::set<std::uint64_t>(c.seeds.begin(), c.seeds.end()).size() != c.seeds.size())
        throw ConfigError("seeds: duplicate seed");
    r.read("lambdas", c.lambdas);
    for (double l : c.lambdas)
        if (!(l >= 0.0))
            throw ConfigError("lambdas: values must be non-negative");
    r.read_positive("eval_stride", c.eval_stride);
    std::string out = c.output_dir.string();
    r.read("output_dir", out);
    c.output_dir = std::filesystem::path(out).is_absolute() ? std::filesystem::path(out) : base_dir / out;
    r.finish();

    for (std::size_t i = 0; i < c.sources.size(); ++i) {
        if (same_city(c.sources[i], c.target))
            throw ConfigError("sources." + std::to_string(i) + ": same city as the target");
        for (std::size_t j = i + 1; j < c.sources.size(); ++j)
            if (same_city(c.sources[i], c.sources[j]))
                throw ConfigError("sources." + std::to_string(j) + ": duplicates sources." + std::to_string(i));
    }
    return c;
}

ExperimentConfig load_config(const std::filesystem::path& file, const std::vector<std::string>& overrides)
{
    json doc = default_config_json();
    std::filesystem::path base = std::filesystem::current_path();
    if (!file.empty()) {
        std::ifstream in(file);
        if (!in)
            throw ConfigError("cannot open config file " + file.string());
        json given = json::parse(in, nullptr, false);
        if (given.is_discarded())
            throw ConfigError("config file " + file.string() + " is not valid JSON");
        if (!given.is_object())
            throw ConfigError("config file " + file.string() + " must hold a JSON object");
        // A config file replaces the city lists wholesale; other fields merge.
        if (given.contains("sources"))
            doc["sources"] = json::array();
        doc.merge_patch(given);
        for (const auto& key : {"sources", "target"})
            if (given.contains(key))
                doc[key] = given[key];
        base = std::filesystem::absolute(file).parent_path();
    }
    for (const auto& o : overrides)
        apply_override(doc, o);
    return parse_config(doc, base);
}

CityData resolve_city(const CitySpec& spec)
{
    if (spec.synth)
        return synth_city(*spec.synth);
    const auto& dir = *spec.path;
    if (!std::filesystem::is_directory(dir))
        throw LoadError("dataset directory not found: " + dir.string());
    return load_city(CityFiles::in_directory(dir));
}

} // namespace stda::cli
