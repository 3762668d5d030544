#include "cred/params.hpp"

#include "cred/ops.hpp"

#include <cmath>

namespace cred {

Activation parse_activation(const std::string& name) {
    if (name == "silu") return Activation::silu;
    if (name == "relu") return Activation::relu;
    if (name == "identity" || name == "none") return Activation::identity;
    throw ValueError("unknown activation '" + name + "'");
}

std::string to_string(Activation act) {
    switch (act) {
        case Activation::silu: return "silu";
        case Activation::relu: return "relu";
        case Activation::identity: return "identity";
    }
    return "?";
}

Tensor activate(const Tensor& x, Activation act) {
    switch (act) {
        case Activation::silu: return ops::silu(x);
        case Activation::relu: return ops::relu(x);
        case Activation::identity: return x;
    }
    return x;
}

Linear Linear::init(std::size_t in, std::size_t out, CounterRng& rng, bool with_bias) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    std::vector<double> w(in * out);
    for (auto& v : w) v = rng.uniform(-bound, bound);
    Linear l{Tensor::from({in, out}, std::move(w), true), {}};
    if (with_bias) {
        std::vector<double> b(out);
        for (auto& v : b) v = rng.uniform(-bound, bound);
        l.bias = Tensor::from({out}, std::move(b), true);
    }
    return l;
}

Linear Linear::he_uniform(std::size_t in, std::size_t out, CounterRng& rng) {
    const double bound = std::sqrt(6.0 / static_cast<double>(in));
    std::vector<double> w(in * out);
    for (auto& v : w) v = rng.uniform(-bound, bound);
    return {Tensor::from({in, out}, std::move(w), true), Tensor::zeros({out}, true)};
}

Linear Linear::identity(std::size_t n, bool with_bias) {
    std::vector<double> w(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) w[i * n + i] = 1.0;
    return {Tensor::from({n, n}, std::move(w), true), with_bias ? Tensor::zeros({n}, true) : Tensor{}};
}

Linear Linear::zeros(std::size_t in, std::size_t out, bool with_bias) {
    return {Tensor::zeros({in, out}, true), with_bias ? Tensor::zeros({out}, true) : Tensor{}};
}

Tensor Linear::operator()(const Tensor& x, std::size_t axis) const {
    if (!bias.defined()) return ops::axis_linear(x, axis, weight);
    return ops::axis_linear(x, axis, weight, bias);
}

void Linear::visit(const std::string& prefix, const ParamVisitor& fn) {
    fn(prefix + ".weight", weight);
    if (bias.defined()) fn(prefix + ".bias", bias);
}

Norm Norm::init(std::size_t n) { return {Tensor::full({n}, 1.0, true), Tensor::zeros({n}, true)}; }

Tensor Norm::operator()(const Tensor& x, std::size_t axis, double eps) const {
    return ops::layer_norm(x, axis, gamma, beta, eps);
}

void Norm::visit(const std::string& prefix, const ParamVisitor& fn) {
    fn(prefix + ".gamma", gamma);
    fn(prefix + ".beta", beta);
}

}  // namespace cred
