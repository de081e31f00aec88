#include <stda/domain_adversarial.hpp>
#include <stda/errors.hpp>
#include <stda/optim.hpp>

#include <cmath>
#include <random>

namespace stda {

namespace {

constexpr double kHiddenSlope = 0.2;

void require_rows(Var v, std::string_view op)
{
    if (v.rows() == 0 || v.value().empty())
        throw ContractError(std::string(op) + ": empty batch");
}

Var clamped_probability(Tape& tape, Var features, const ParamVars& disc)
{
    return tape.clamp(discriminate(tape, features, disc), kProbClamp, 1.0 - kProbClamp);
}

} // namespace

ParamSet init_discriminator(std::size_t width, std::uint64_t seed)
{
    if (width == 0)
        throw ContractError("init_discriminator: width must be positive");
    std::mt19937_64 rng(seed);
    const double bound = std::sqrt(1.0 / static_cast<double>(width));
    std::uniform_real_distribution<double> dist(-bound, bound);
    auto fill = [&](Shape shape) {
        DenseArray a(std::move(shape));
        for (auto& v : a.data())
            v = dist(rng);
        return a;
    };
    ParamSet disc;
    disc.add("disc.W1", fill({width, width}));
    disc.add("disc.b1", fill({1, width}));
    disc.add("disc.W2", fill({width, 1}));
    disc.add("disc.b2", fill({1, 1}));
    return disc;
}

Var discriminate(Tape& tape, Var features, const ParamVars& disc)
{
    Var w1 = disc["disc.W1"];
    if (features.cols() != w1.rows())
        throw ContractError("discriminate: feature width " + std::to_string(features.cols()) + " differs from "
                            + std::to_string(w1.rows()));
    Var hidden = tape.leaky_relu(tape.matmul(features, w1) + disc["disc.b1"], kHiddenSlope);
    return tape.sigmoid(tape.matmul(hidden, disc["disc.W2"]) + disc["disc.b2"]);
}

Var discriminator_loss(Tape& tape, Var source, Var target, const ParamVars& disc)
{
    require_rows(source, "discriminator_loss");
    require_rows(target, "discriminator_loss");
    Var real = tape.mean(tape.log(clamped_probability(tape, source, disc)));
    Var one_minus = tape.add_scalar(tape.scale(clamped_probability(tape, target, disc), -1.0), 1.0);
    Var fake = tape.mean(tape.log(one_minus));
    return tape.scale(real + fake, -1.0);
}

Var encoder_adversarial_loss(Tape& tape, Var target, const ParamVars& disc)
{
    require_rows(target, "encoder_adversarial_loss");
    Var one_minus = tape.add_scalar(tape.scale(clamped_probability(tape, target, disc), -1.0), 1.0);
    return tape.mean(tape.log(one_minus));
}

Var st_domain_loss(Tape& tape, Var target, const ParamVars& disc)
{
    require_rows(target, "st_domain_loss");
    return tape.scale(tape.mean(tape.log(clamped_probability(tape, target, disc))), -1.0);
}

DenseArray discriminate(const DenseArray& features, const ParamSet& disc)
{
    Tape tape;
    auto p = tape.bind_constant(disc);
    return discriminate(tape, tape.constant(features), p).value();
}

double discriminator_loss(const DenseArray& source, const DenseArray& target, const ParamSet& disc)
{
    Tape tape;
    auto p = tape.bind_constant(disc);
    return discriminator_loss(tape, tape.constant(source), tape.constant(target), p).value().item();
}

double encoder_adversarial_loss(const DenseArray& target, const ParamSet& disc)
{
    Tape tape;
    auto p = tape.bind_constant(disc);
    return encoder_adversarial_loss(tape, tape.constant(target), p).value().item();
}

double st_domain_loss(const DenseArray& target, const ParamSet& disc)
{
    Tape tape;
    auto p = tape.bind_constant(disc);
    return st_domain_loss(tape, tape.constant(target), p).value().item();
}

double discriminator_step(const DenseArray& source, const DenseArray& target, ParamSet& disc, double lr)
{
    disc.zero_grad();
    const double loss = forward_and_grad(disc, [&](Tape& tape, const ParamVars& p) {
        return discriminator_loss(tape, tape.constant(source), tape.constant(target), p);
    });
    sgd_step(disc, lr);
    return loss;
}

double adversarial_round(const DomainSide& source, const DomainSide& target, const ParamSet& encoder,
                         const EncoderConfig& config, ParamSet& disc, double lr)
{
    if (!source.windows || !target.windows || source.windows->empty() || target.windows->empty())
        throw ContractError("adversarial_round: both sides need windows");
    const auto zs = st_embed(*source.windows, *source.graph, encoder, config);
    const auto zt = st_embed(*target.windows, *target.graph, encoder, config);
    return discriminator_step(zs.z, zt.z, disc, lr);
}

} // namespace stda
