#pragma once

#include <stda/dense_array.hpp>
#include <stda/param_set.hpp>
#include <stda/st_embedding.hpp>
#include <stda/tape.hpp>

#include <cstdint>

namespace stda {

/// Probabilities are clamped to [kProbClamp, 1 - kProbClamp] before any log.
inline constexpr double kProbClamp = 1e-7;

/// Discriminator MLP d' -> d' -> 1: LeakyReLU(0.2) hidden layer, sigmoid output.
/// Parameters "disc.W1", "disc.b1", "disc.W2", "disc.b2".
ParamSet init_discriminator(std::size_t width, std::uint64_t seed);

Var discriminate(Tape& tape, Var features, const ParamVars& disc);

/// -[mean log D(source) + mean log(1 - D(target))]. Descending this is the
/// discriminator's ascent on the real/fake log-likelihood.
Var discriminator_loss(Tape& tape, Var source, Var target, const ParamVars& disc);

/// mean log(1 - D(target)): the minimax encoder objective.
Var encoder_adversarial_loss(Tape& tape, Var target, const ParamVars& disc);

/// BCE of D(target) against label 1 (source): mean -log D(target).
Var st_domain_loss(Tape& tape, Var target, const ParamVars& disc);

// Value-level forms.
DenseArray discriminate(const DenseArray& features, const ParamSet& disc);
double discriminator_loss(const DenseArray& source, const DenseArray& target, const ParamSet& disc);
double encoder_adversarial_loss(const DenseArray& target, const ParamSet& disc);
double st_domain_loss(const DenseArray& target, const ParamSet& disc);

/// One gradient-descent step of the discriminator on fixed features.
/// Returns the discriminator loss before the step.
double discriminator_step(const DenseArray& source, const DenseArray& target, ParamSet& disc, double lr);

struct DomainSide {
    const WindowBatch* windows = nullptr;
    const TrafficGraph* graph = nullptr;
};

/// Embeds both sides with the (frozen) encoder and takes one discriminator
/// step. Returns the discriminator loss before the step.
double adversarial_round(const DomainSide& source, const DomainSide& target, const ParamSet& encoder,
                         const EncoderConfig& config, ParamSet& disc, double lr);

} // namespace stda
