#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mmrl/autodiff.hpp"
#include "mmrl/rng.hpp"
#include "mmrl/tensor.hpp"

namespace mmrl {

struct LinearLayer {
    Tensor weight;  // [out x in]
    Tensor bias;    // [out]
    std::size_t in() const { return weight.extent(1); }
    std::size_t out() const { return weight.extent(0); }
};

struct Conv2dLayer {
    Tensor weight;  // [F x C x Kh x Kw]
    Tensor bias;    // [F]
    std::size_t stride = 1;
    std::size_t padding = 0;
};

// Glorot-uniform weights, zero bias.
LinearLayer init_linear(std::size_t in, std::size_t out, Rng& rng);
Conv2dLayer init_conv2d(std::size_t in_channels, std::size_t out_channels, std::size_t kernel,
                        std::size_t stride, std::size_t padding, Rng& rng);

/// Connects parameter tensors to a Tape for one forward/backward pass and
/// hands their gradients to the optimizer afterwards. Rebuilt together with
/// the tape every step.
class ParamBinder {
public:
    explicit ParamBinder(Tape& tape) : tape_(&tape) {}

    Var bind(Tensor& param) {
        Var v = tape_->leaf(param, true);
        params_.push_back(&param);
        vars_.push_back(v);
        return v;
    }

    std::span<Tensor* const> params() const { return params_; }
    std::span<const Var> vars() const { return vars_; }
    std::vector<Tensor> grad_copies() const;

private:
    Tape* tape_;
    std::vector<Tensor*> params_;
    std::vector<Var> vars_;
};

enum class OptKind { sgd, adam };

OptKind parse_opt_kind(const std::string& name);
const char* opt_kind_name(OptKind kind);

struct OptimizerState {
    OptKind kind = OptKind::adam;
    double learning_rate = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::size_t step_count = 0;
    std::vector<Tensor> m;  // first moments, per parameter slot
    std::vector<Tensor> v;  // second moments
};

OptimizerState make_sgd(double learning_rate);
OptimizerState make_adam(double learning_rate);

void sgd_step(std::span<Tensor* const> params, std::span<const Tensor> grads, OptimizerState& state);
void adam_step(std::span<Tensor* const> params, std::span<const Tensor> grads, OptimizerState& state);
void optimizer_step(std::span<Tensor* const> params, std::span<const Tensor> grads, OptimizerState& state);

// After backward() on the tape: one optimizer step over everything the binder
// bound, in binding order.
void apply_step(const ParamBinder& binder, OptimizerState& state);

// x.W^T + bias, rows are samples.
Var forward_linear(Tape& tape, ParamBinder& binder, LinearLayer& layer, Var x);
Var forward_conv2d(Tape& tape, ParamBinder& binder, Conv2dLayer& layer, Var x);

}  // namespace mmrl
