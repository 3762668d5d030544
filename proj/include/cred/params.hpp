#pragma once

#include "cred/rng.hpp"
#include "cred/tensor.hpp"

#include <functional>
#include <string>

namespace cred {

using ParamVisitor = std::function<void(const std::string& name, Tensor& value)>;

enum class Activation { silu, relu, identity };

Activation parse_activation(const std::string& name);
std::string to_string(Activation act);
Tensor activate(const Tensor& x, Activation act);

// Weight [in, out] applied with ops::axis_linear, plus bias [out].
struct Linear {
    Tensor weight;
    Tensor bias;  // undefined when the layer has no bias

    // Uniform(-1/sqrt(in), 1/sqrt(in)) for both weight and bias.
    static Linear init(std::size_t in, std::size_t out, CounterRng& rng, bool with_bias = true);
    // Uniform(-sqrt(6/in), sqrt(6/in)) weights and zero bias.
    static Linear he_uniform(std::size_t in, std::size_t out, CounterRng& rng);
    static Linear identity(std::size_t n, bool with_bias = true);
    static Linear zeros(std::size_t in, std::size_t out, bool with_bias = true);

    // Applies along `axis` of x.
    Tensor operator()(const Tensor& x, std::size_t axis) const;
    void visit(const std::string& prefix, const ParamVisitor& fn);
};

struct Norm {
    Tensor gamma;
    Tensor beta;

    static Norm init(std::size_t n);
    Tensor operator()(const Tensor& x, std::size_t axis, double eps) const;
    void visit(const std::string& prefix, const ParamVisitor& fn);
};

}  // namespace cred
