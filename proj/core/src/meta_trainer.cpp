#include <stda/domain_adversarial.hpp>
#include <stda/errors.hpp>
#include <stda/meta_trainer.hpp>

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <tuple>

namespace stda {

namespace {

std::uint64_t splitmix(std::uint64_t x)
{
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t index)
{
    return splitmix(splitmix(seed ^ (stream * 0x632BE59BD9B4E019ULL)) + index);
}

enum Stream : std::uint64_t { kInit = 1, kTasks, kTarget, kAdapt, kDisc };

WindowBatch concat_batches(const WindowBatch& a, const WindowBatch& b)
{
    std::vector<std::size_t> starts = a.starts;
    starts.insert(starts.end(), b.starts.begin(), b.starts.end());
    WindowBatch out;
    out.city_id = a.city_id;
    out.history = a.history;
    out.horizon = a.horizon;
    out.n_nodes = a.n_nodes;
    out.starts = std::move(starts);
    auto join = [](const DenseArray& x, const DenseArray& y) {
        Shape shape = x.shape();
        shape[0] += y.shape()[0];
        std::vector<double> data(x.values());
        data.insert(data.end(), y.values().begin(), y.values().end());
        return DenseArray(std::move(shape), std::move(data));
    };
    out.inputs = join(a.inputs, b.inputs);
    out.targets = join(a.targets, b.targets);
    out.mask = join(a.mask, b.mask);
    return out;
}

DenseArray stack_rows(const std::vector<DenseArray>& parts)
{
    std::size_t rows = 0;
    const auto cols = parts.front().cols();
    std::vector<double> data;
    for (const auto& p : parts) {
        rows += p.rows();
        data.insert(data.end(), p.values().begin(), p.values().end());
    }
    return DenseArray::matrix(rows, cols, std::move(data));
}

double rolling_mean(const std::vector<double>& history, std::size_t window)
{
    const auto n = std::min(window, history.size());
    double s = 0.0;
    for (auto it = history.end() - static_cast<std::ptrdiff_t>(n); it != history.end(); ++it)
        s += *it;
    return s / static_cast<double>(n);
}

} // namespace

ParamSet init_theta(const ModelConfig& model, std::uint64_t seed)
{
    ParamSet theta = init_encoder(model.encoder, seed);
    init_head(theta, model.encoder.hidden, model.horizon, derive_seed(seed, kInit, 7));
    return theta;
}

TrainState init_train_state(const ModelConfig& model, const MetaConfig& config)
{
    TrainState state;
    state.theta = init_theta(model, derive_seed(config.seed, kInit, 0));
    state.disc = init_discriminator(model.encoder.hidden, derive_seed(config.seed, kInit, 1));
    state.meta_opt = make_adam(config.beta);
    state.best_theta = state.theta;
    state.best_score = std::numeric_limits<double>::infinity();
    return state;
}

Var task_loss(Tape& tape, const ParamVars& theta, const WindowBatch& windows, const TrafficGraph& graph,
              const ModelConfig& model, LossForm form)
{
    if (windows.empty())
        throw ContractError("task_loss: empty window set");
    Var z = st_embed(tape, windows, graph, theta, model.encoder);
    Var pred = predict(tape, z, theta);
    return prediction_loss(tape, pred, target_matrix(windows), mask_matrix(windows), form);
}

double task_loss(const ParamSet& theta, const WindowBatch& windows, const TrafficGraph& graph,
                 const ModelConfig& model, LossForm form)
{
    return evaluate(theta, [&](Tape& tape, const ParamVars& p) {
        return task_loss(tape, p, windows, graph, model, form);
    });
}

ParamSet inner_adapt(const ParamSet& theta, const EpisodeTask& task, const TrafficGraph& graph,
                     const ModelConfig& model, const MetaConfig& config)
{
    const Objective support = [&](Tape& tape, const ParamVars& p) {
        return task_loss(tape, p, task.support, graph, model, config.loss_form);
    };
    return inner_adapt(theta, support, config.alpha, config.inner_steps);
}

StepLog meta_step(TrainState& state, std::span<const EpisodeTask> tasks, std::span<const TrafficGraph* const> graphs,
                  const DomainTarget& target, const ModelConfig& model, const MetaConfig& config)
{
    const auto started = std::chrono::steady_clock::now();
    if (tasks.size() != config.task_batch)
        throw ContractError("meta_step: got " + std::to_string(tasks.size()) + " tasks, task batch is "
                            + std::to_string(config.task_batch));
    const bool use_domain = config.lambda > 0.0;
    if ((use_domain || config.train_discriminator) && (!target.windows || !target.graph))
        throw ContractError("meta_step: domain adaptation needs target windows");

    std::vector<double> meta_grad(state.theta.scalar_count(), 0.0);
    std::vector<DenseArray> source_features, target_features;
    double sum_lp = 0.0, sum_lst = 0.0, sum_overall = 0.0;

    for (const auto& task : tasks) {
        if (task.city >= graphs.size() || !graphs[task.city])
            throw ContractError("meta_step: no graph for task city " + task.city_id);
        const auto& graph = *graphs[task.city];
        const Objective support = [&](Tape& tape, const ParamVars& p) {
            return task_loss(tape, p, task.support, graph, model, config.loss_form);
        };
        double lp = 0.0, lst = 0.0;
        DenseArray zq, zt;
        const Objective query = [&](Tape& tape, const ParamVars& p) {
            Var z = st_embed(tape, task.query, graph, p, model.encoder);
            Var loss = prediction_loss(tape, predict(tape, z, p), target_matrix(task.query), mask_matrix(task.query),
                                       config.loss_form);
            lp = loss.value().item();
            zq = z.value();
            if (use_domain) {
                auto d = tape.bind_constant(state.disc);
                Var zt_var = st_embed(tape, *target.windows, *target.graph, p, model.encoder);
                Var domain = st_domain_loss(tape, zt_var, d);
                lst = domain.value().item();
                zt = zt_var.value();
                loss = loss + tape.scale(domain, config.lambda);
            }
            return loss;
        };
        auto tg = maml_task_gradient(state.theta, support, query, config.alpha, config.inner_steps,
                                     config.maml_order);
        const double inv = 1.0 / static_cast<double>(tasks.size());
        for (std::size_t i = 0; i < meta_grad.size(); ++i)
            meta_grad[i] += inv * tg.grad[i];
        sum_lp += lp;
        sum_lst += lst;
        sum_overall += tg.query_value;
        if (config.train_discriminator) {
            source_features.push_back(std::move(zq));
            if (!use_domain)
                zt = st_embed(*target.windows, *target.graph, tg.fast, model.encoder).z;
            target_features.push_back(std::move(zt));
        }
    }

    const double n = static_cast<double>(tasks.size());
    StepLog log;
    log.step = state.step + 1;
    log.l_p = sum_lp / n;
    log.l_st = sum_lst / n;
    log.l_overall = sum_overall / n;
    log.mean_query_loss = log.l_p;

    // The query losses above belong to the pre-update parameters.
    const double score = [&] {
        auto h = state.query_history;
        h.push_back(log.mean_query_loss);
        return rolling_mean(h, config.selection_window);
    }();
    if (score < state.best_score) {
        state.best_score = score;
        state.best_theta = state.theta;
        state.best_step = log.step;
    }

    state.theta.set_flat_grads(meta_grad);
    adam_step(state.theta, state.meta_opt);

    if (config.train_discriminator)
        log.l_disc = discriminator_step(stack_rows(source_features), stack_rows(target_features), state.disc,
                                        config.disc_lr);

    state.step = log.step;
    state.query_history.push_back(log.mean_query_loss);
    log.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count();
    state.log.push_back(log);
    return log;
}

void adapt_to_target(TrainState& state, const WindowBatch& adapt_windows, const TrafficGraph& graph,
                     const ModelConfig& model, const MetaConfig& config)
{
    if (adapt_windows.empty())
        throw ContractError("adapt_to_target: empty adapt range");
    const auto batch = std::min(config.adapt_batch, adapt_windows.size());
    std::vector<std::size_t> all(adapt_windows.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    for (int s = 0; s < config.adapt_steps; ++s) {
        std::mt19937_64 rng(derive_seed(config.seed, kAdapt, static_cast<std::uint64_t>(s)));
        for (std::size_t k = 0; k < batch; ++k) {
            std::uniform_int_distribution<std::size_t> pick(k, all.size() - 1);
            std::swap(all[k], all[pick(rng)]);
        }
        const auto mini = adapt_windows.select(std::span(all).first(batch));
        state.theta.zero_grad();
        forward_and_grad(state.theta, [&](Tape& tape, const ParamVars& p) {
            return task_loss(tape, p, mini, graph, model, config.loss_form);
        });
        sgd_step(state.theta, config.alpha);
        ++state.adapted_steps;
    }
}

std::string_view variant_name(Variant v)
{
    switch (v) {
    case Variant::Full: return "full";
    case Variant::NoDa: return "no_da";
    case Variant::NoMeta: return "no_meta";
    case Variant::TargetOnly: return "target_only";
    case Variant::Finetune: return "finetune";
    }
    return "unknown";
}

Variant parse_variant(std::string_view name)
{
    for (auto v : all_variants())
        if (variant_name(v) == name)
            return v;
    throw ConfigError("unknown variant '" + std::string(name) + "'");
}

std::span<const Variant> all_variants()
{
    static constexpr std::array<Variant, 5> kAll = {Variant::Full, Variant::NoDa, Variant::NoMeta,
                                                    Variant::TargetOnly, Variant::Finetune};
    return kAll;
}

// --- TrainingData ----------------------------------------------------------

TrainingData::TrainingData(std::vector<CityData> sources, CityData target, int adapt_days, const ModelConfig& model)
    : raw_target_(target), adapt_days_(adapt_days)
{
    if (sources.empty() && adapt_days == 0)
        throw ContractError("TrainingData: zero-shot evaluation needs at least one source city");
    std::tie(adapt_, test_) = target_split(target.series, adapt_days);
    if (window_count(test_.length(), model.history, model.horizon, 1) == 0)
        throw SamplingError("TrainingData: target test range cannot hold one window");

    if (adapt_.empty()) {
        // Zero-shot: no target statistics are available, so pool the sources.
        std::vector<const SpeedSeries*> raw;
        for (const auto& c : sources)
            raw.push_back(&c.series);
        target_norm_ = pooled_normalizer(raw, target.series.n_nodes());
    } else {
        target_norm_ = fit_normalizer(target.series, adapt_);
    }
    for (auto& city : sources) {
        const auto norm = fit_normalizer(city.series, city.series.full_range());
        city.series = norm.apply(city.series);
        sources_.push_back(std::move(city));
    }
    target.series = target_norm_.apply(target.series);
    target_ = std::move(target);
}

const std::vector<CityData>& TrainingData::sources() const
{
    ++source_reads_;
    return sources_;
}

// --- Variants --------------------------------------------------------------

namespace {

// Base-stage recipe of each variant.
struct Recipe {
    bool use_sources = true;
    bool meta = true;     // inner/outer split; otherwise joint training on support + query
    bool domain = true;   // lambda * L_st and discriminator rounds
};

Recipe recipe_for(Variant v)
{
    switch (v) {
    case Variant::Full: return {true, true, true};
    case Variant::NoDa: return {true, true, false};
    case Variant::NoMeta: return {true, false, true};
    case Variant::TargetOnly: return {false, false, false};
    case Variant::Finetune: return {true, false, false};
    }
    throw ConfigError("unknown variant");
}

WindowBatch adapt_windows(const TrainingData& data, const ModelConfig& model)
{
    return make_windows(data.target().series, model.history, model.horizon, data.adapt_range(), 1);
}

} // namespace

TrainState train_variant(Variant variant, const TrainingData& data, const ModelConfig& model,
                         const MetaConfig& config, const StepCallback& on_step)
{
    const auto recipe = recipe_for(variant);
    MetaConfig cfg = config;
    if (!recipe.domain) {
        cfg.lambda = 0.0;
        cfg.train_discriminator = false;
    }
    if (!recipe.meta)
        cfg.inner_steps = 0;

    const bool needs_target_windows = recipe.domain || !recipe.use_sources;
    if (needs_target_windows && data.zero_shot())
        throw ContractError(std::string(variant_name(variant)) + " needs a non-empty target adapt range");

    TaskSpec spec{model.history, model.horizon, cfg.support_size, cfg.query_size};
    std::vector<TaskSource> task_sources;
    std::vector<const TrafficGraph*> graphs;
    if (recipe.use_sources) {
        for (const auto& city : data.sources()) {
            task_sources.push_back(TaskSource{&city.graph, &city.series, city.series.full_range()});
            graphs.push_back(&city.graph);
        }
        if (task_sources.empty())
            throw ContractError(std::string(variant_name(variant)) + " needs at least one source city");
    } else {
        const auto& t = data.target();
        task_sources.push_back(TaskSource{&t.graph, &t.series, data.adapt_range()});
        graphs.push_back(&t.graph);
    }

    TrainState state = init_train_state(model, cfg);
    for (int s = 0; s < cfg.meta_steps; ++s) {
        const auto step = static_cast<std::uint64_t>(s);
        auto tasks = sample_tasks(task_sources, spec, cfg.task_batch, derive_seed(cfg.seed, kTasks, step));
        if (!recipe.meta)
            for (auto& task : tasks)
                task.query = concat_batches(task.support, task.query);

        WindowBatch target_windows;
        DomainTarget target;
        if (recipe.domain) {
            target_windows = sample_windows(data.target().series, model.history, model.horizon, data.adapt_range(),
                                            cfg.target_batch, derive_seed(cfg.seed, kTarget, step));
            target = DomainTarget{&target_windows, &data.target().graph};
        }
        const auto log = meta_step(state, tasks, graphs, target, model, cfg);
        if (on_step)
            on_step(log);
        if (cfg.patience > 0 && state.step - state.best_step >= static_cast<std::size_t>(cfg.patience))
            break;
    }
    state.theta = state.best_theta;
    return state;
}

void adapt_on_split(TrainState& state, const TrainingData& data, const ModelConfig& model, const MetaConfig& config)
{
    if (data.zero_shot() || config.adapt_steps == 0)
        return;
    adapt_to_target(state, adapt_windows(data, model), data.target().graph, model, config);
}

TrainState run_variant(Variant variant, const TrainingData& data, const ModelConfig& model, const MetaConfig& config,
                       const StepCallback& on_step)
{
    TrainState state = train_variant(variant, data, model, config, on_step);
    adapt_on_split(state, data, model, config);
    return state;
}

} // namespace stda
