#include "mmrl/nn.hpp"

#include <cmath>

#include "mmrl/errors.hpp"

namespace mmrl {

LinearLayer init_linear(std::size_t in, std::size_t out, Rng& rng) {
    if (in < 1 || out < 1) throw ValueError("init_linear: dimensions must be positive");
    const double a = std::sqrt(6.0 / static_cast<double>(in + out));
    LinearLayer layer{Tensor({out, in}), Tensor({out})};
    for (double& w : layer.weight.values()) w = rng.uniform(-a, a);
    return layer;
}

Conv2dLayer init_conv2d(std::size_t in_channels, std::size_t out_channels, std::size_t kernel,
                        std::size_t stride, std::size_t padding, Rng& rng) {
    if (in_channels < 1 || out_channels < 1 || kernel < 1) {
        throw ValueError("init_conv2d: channels and kernel must be positive");
    }
    if (stride < 1) throw ValueError("init_conv2d: stride must be positive");
    const double fan_in = static_cast<double>(in_channels * kernel * kernel);
    const double fan_out = static_cast<double>(out_channels * kernel * kernel);
    const double a = std::sqrt(6.0 / (fan_in + fan_out));
    Conv2dLayer layer{Tensor({out_channels, in_channels, kernel, kernel}), Tensor({out_channels}), stride,
                      padding};
    for (double& w : layer.weight.values()) w = rng.uniform(-a, a);
    return layer;
}

std::vector<Tensor> ParamBinder::grad_copies() const {
    std::vector<Tensor> grads;
    grads.reserve(vars_.size());
    for (const Var& v : vars_) grads.push_back(v.grad());
    return grads;
}

OptKind parse_opt_kind(const std::string& name) {
    if (name == "sgd") return OptKind::sgd;
    if (name == "adam") return OptKind::adam;
    throw ValueError("unknown optimizer '" + name + "' (expected sgd or adam)");
}

const char* opt_kind_name(OptKind kind) { return kind == OptKind::sgd ? "sgd" : "adam"; }

OptimizerState make_sgd(double learning_rate) {
    OptimizerState s;
    s.kind = OptKind::sgd;
    s.learning_rate = learning_rate;
    return s;
}

OptimizerState make_adam(double learning_rate) {
    OptimizerState s;
    s.kind = OptKind::adam;
    s.learning_rate = learning_rate;
    return s;
}

namespace {

void check_step_args(std::span<Tensor* const> params, std::span<const Tensor> grads) {
    if (params.size() != grads.size()) {
        throw ShapeError("optimizer step: " + std::to_string(params.size()) + " parameters but " +
                         std::to_string(grads.size()) + " gradients");
    }
    for (std::size_t i = 0; i < params.size(); ++i) require_same_shape(*params[i], grads[i], "optimizer step");
}

}  // namespace

void sgd_step(std::span<Tensor* const> params, std::span<const Tensor> grads, OptimizerState& state) {
    if (state.kind != OptKind::sgd) throw ValueError("sgd_step: optimizer state is not sgd");
    check_step_args(params, grads);
    state.step_count += 1;
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor& p = *params[i];
        const Tensor& g = grads[i];
        for (std::size_t k = 0; k < p.size(); ++k) p[k] -= state.learning_rate * g[k];
    }
}

void adam_step(std::span<Tensor* const> params, std::span<const Tensor> grads, OptimizerState& state) {
    if (state.kind != OptKind::adam) throw ValueError("adam_step: optimizer state is not adam");
    check_step_args(params, grads);
    if (state.m.empty()) {
        for (const Tensor* p : params) {
            state.m.push_back(Tensor::zeros(p->shape()));
            state.v.push_back(Tensor::zeros(p->shape()));
        }
    }
    if (state.m.size() != params.size()) {
        throw ShapeError("adam_step: parameter count changed between steps");
    }
    state.step_count += 1;
    const double t = static_cast<double>(state.step_count);
    const double bc1 = 1.0 - std::pow(state.beta1, t);
    const double bc2 = 1.0 - std::pow(state.beta2, t);
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor& p = *params[i];
        const Tensor& g = grads[i];
        Tensor& m = state.m[i];
        Tensor& v = state.v[i];
        require_same_shape(p, m, "adam_step moment");
        for (std::size_t k = 0; k < p.size(); ++k) {
            m[k] = state.beta1 * m[k] + (1.0 - state.beta1) * g[k];
            v[k] = state.beta2 * v[k] + (1.0 - state.beta2) * g[k] * g[k];
            const double mhat = m[k] / bc1;
            const double vhat = v[k] / bc2;
            p[k] -= state.learning_rate * mhat / (std::sqrt(vhat) + state.epsilon);
        }
    }
}

void optimizer_step(std::span<Tensor* const> params, std::span<const Tensor> grads, OptimizerState& state) {
    if (state.kind == OptKind::sgd) {
        sgd_step(params, grads, state);
    } else {
        adam_step(params, grads, state);
    }
}

void apply_step(const ParamBinder& binder, OptimizerState& state) {
    optimizer_step(binder.params(), binder.grad_copies(), state);
}

Var forward_linear(Tape& tape, ParamBinder& binder, LinearLayer& layer, Var x) {
    const Tensor& xv = x.value();
    if (xv.ndim() != 2 || xv.extent(1) != layer.in()) {
        throw ShapeError("forward_linear: input " + shape_string(xv.shape()) + " does not match weight " +
                         shape_string(layer.weight.shape()));
    }
    Var w = binder.bind(layer.weight);
    Var b = binder.bind(layer.bias);
    return tape.add_row_bias(tape.matmul(x, tape.transpose2d(w)), b);
}

Var forward_conv2d(Tape& tape, ParamBinder& binder, Conv2dLayer& layer, Var x) {
    Var w = binder.bind(layer.weight);
    Var b = binder.bind(layer.bias);
    return tape.conv2d(x, w, b, layer.stride, layer.padding);
}

}  // namespace mmrl
