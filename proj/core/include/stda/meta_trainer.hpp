#pragma once

#include <stda/inference_head.hpp>
#include <stda/maml.hpp>
#include <stda/normalizer.hpp>
#include <stda/optim.hpp>
#include <stda/param_set.hpp>
#include <stda/st_embedding.hpp>
#include <stda/traffic_graph.hpp>
#include <stda/windows.hpp>

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace stda {

/// Training hyper-parameters.
struct MetaConfig {
    double alpha = 0.01;        ///< inner-loop / adaptation step size (plain gradient descent)
    double beta = 0.001;        ///< outer-loop step size (adaptive moment)
    std::size_t task_batch = 5; ///< tasks per meta-step
    double lambda = 1.5;        ///< weight of the domain loss in the overall loss
    int inner_steps = 1;
    int meta_steps = 300;
    std::uint64_t seed = 0;
    MamlOrder maml_order = MamlOrder::First;
    LossForm loss_form = LossForm::Rmse;
    double disc_lr = 0.01;      ///< discriminator gradient-descent step size
    bool train_discriminator = true;
    std::size_t support_size = 8;
    std::size_t query_size = 8;
    std::size_t target_batch = 4; ///< target windows per meta-step for the domain loss
    int adapt_steps = 100;        ///< gradient-descent steps on the target adapt split
    std::size_t adapt_batch = 8;
    std::size_t selection_window = 10; ///< rolling window for best-model selection
    int patience = 50;                 ///< meta-steps without improvement before stopping
};

struct ModelConfig {
    EncoderConfig encoder;
    std::size_t history = 12;
    std::size_t horizon = 6;
};

/// Encoder + head parameters (theta) for `model`.
ParamSet init_theta(const ModelConfig& model, std::uint64_t seed);

struct StepLog {
    std::size_t step = 0;
    double mean_query_loss = 0.0; ///< mean query prediction loss over the task batch
    double l_p = 0.0;
    double l_st = 0.0;
    double l_overall = 0.0;
    double l_disc = 0.0;
    double wall_ms = 0.0;
};

struct TrainState {
    ParamSet theta;
    ParamSet disc;
    OptimizerState meta_opt;
    std::size_t step = 0;
    std::vector<double> query_history;
    std::vector<StepLog> log;
    ParamSet best_theta;
    double best_score = 0.0;
    std::size_t best_step = 0;
    int adapted_steps = 0;
};

TrainState init_train_state(const ModelConfig& model, const MetaConfig& config);

/// Prediction loss of theta on a window set (RMSE or MSE per config).
Var task_loss(Tape& tape, const ParamVars& theta, const WindowBatch& windows, const TrafficGraph& graph,
              const ModelConfig& model, LossForm form);
double task_loss(const ParamSet& theta, const WindowBatch& windows, const TrafficGraph& graph,
                 const ModelConfig& model, LossForm form = LossForm::Rmse);

/// inner_adapt on a task's support set.
ParamSet inner_adapt(const ParamSet& theta, const EpisodeTask& task, const TrafficGraph& graph,
                     const ModelConfig& model, const MetaConfig& config);

/// Target-city windows for the domain loss in one meta-step.
struct DomainTarget {
    const WindowBatch* windows = nullptr;
    const TrafficGraph* graph = nullptr;
};

/// One meta-step: per task adapt on the support set, evaluate
/// L_p(query) + lambda * L_st(target) at the adapted parameters, average the
/// task meta-gradients in task order, take one adaptive-moment step on theta,
/// then one discriminator round. `graphs[task.city]` is each task's graph.
/// The domain term and the discriminator round are skipped when lambda is 0
/// or the discriminator is frozen respectively.
StepLog meta_step(TrainState& state, std::span<const EpisodeTask> tasks, std::span<const TrafficGraph* const> graphs,
                  const DomainTarget& target, const ModelConfig& model, const MetaConfig& config);

/// Plain gradient descent at alpha on the adapt windows for
/// config.adapt_steps minibatch steps. Discriminator untouched.
void adapt_to_target(TrainState& state, const WindowBatch& adapt_windows, const TrafficGraph& graph,
                     const ModelConfig& model, const MetaConfig& config);

enum class Variant { Full, NoDa, NoMeta, TargetOnly, Finetune };

std::string_view variant_name(Variant v);
Variant parse_variant(std::string_view name);
std::span<const Variant> all_variants();

/// Normalized source cities plus the target split, ready for training.
class TrainingData {
public:
    TrainingData(std::vector<CityData> sources, CityData target, int adapt_days, const ModelConfig& model);

    /// Source access is counted so isolation of target-only runs can be audited.
    const std::vector<CityData>& sources() const;
    std::size_t source_reads() const noexcept { return source_reads_; }

    const CityData& target() const noexcept { return target_; }
    const CityData& raw_target() const noexcept { return raw_target_; }
    const Normalizer& target_normalizer() const noexcept { return target_norm_; }
    TimeRange adapt_range() const noexcept { return adapt_; }
    TimeRange test_range() const noexcept { return test_; }
    int adapt_days() const noexcept { return adapt_days_; }
    bool zero_shot() const noexcept { return adapt_.empty(); }

private:
    std::vector<CityData> sources_;
    CityData target_;
    CityData raw_target_;
    Normalizer target_norm_;
    TimeRange adapt_;
    TimeRange test_;
    int adapt_days_ = 0;
    mutable std::size_t source_reads_ = 0;
};

using StepCallback = std::function<void(const StepLog&)>;

/// Runs the base stage of `variant` (meta-steps with early stopping and best
/// rolling-query-loss selection). Returns the selected state, not adapted.
TrainState train_variant(Variant variant, const TrainingData& data, const ModelConfig& model,
                         const MetaConfig& config, const StepCallback& on_step = {});

/// train_variant followed by adapt_to_target on the target adapt split.
TrainState run_variant(Variant variant, const TrainingData& data, const ModelConfig& model, const MetaConfig& config,
                       const StepCallback& on_step = {});

/// Adapts a trained state on the target split (no-op in zero-shot mode).
void adapt_on_split(TrainState& state, const TrainingData& data, const ModelConfig& model, const MetaConfig& config);

} // namespace stda
