#include "cred/ops.hpp"

#include "cred/mac_counter.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace cred::ops {

using detail::Node;

namespace {

void check_finite(const std::vector<double>& v, const char* op) {
    for (double x : v) {
        if (!std::isfinite(x)) throw NonFiniteError(std::string(op) + ": produced a non-finite value");
    }
}

using Backward = std::function<void(Node&)>;

Tensor make_result(Shape shape, std::vector<double> data, std::vector<std::shared_ptr<Node>> parents, const char* op,
                   Backward backward) {
    check_finite(data, op);
    auto node = std::make_shared<Node>();
    node->shape = std::move(shape);
    node->data = std::move(data);
    node->op = op;
    const bool any = std::any_of(parents.begin(), parents.end(), [](const auto& p) { return p->requires_grad; });
    if (any && NoGradGuard::grad_enabled()) {
        node->requires_grad = true;
        node->parents = std::move(parents);
        node->backward = std::move(backward);
    }
    return Tensor(std::move(node));
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    }
}

void require_rank(const Tensor& x, std::size_t rank, const char* op) {
    if (x.rank() != rank) {
        throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                         shape_str(x.shape()));
    }
}

void require_axis(const Tensor& x, std::size_t axis, const char* op) {
    if (axis >= x.rank()) {
        throw ShapeError(std::string(op) + ": axis " + std::to_string(axis) + " out of range for " +
                         shape_str(x.shape()));
    }
}

// Splits a shape around `axis` into (outer, n, inner).
struct AxisView {
    std::size_t outer = 1, n = 1, inner = 1;
};

AxisView axis_view(const Shape& s, std::size_t axis) {
    AxisView v;
    for (std::size_t i = 0; i < axis; ++i) v.outer *= s[i];
    v.n = s[axis];
    for (std::size_t i = axis + 1; i < s.size(); ++i) v.inner *= s[i];
    return v;
}

template <class F, class DF>
Tensor unary(const Tensor& x, const char* op, F f, DF df) {
    auto xs = x.data();
    std::vector<double> out(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) out[i] = f(xs[i]);
    auto px = x.node();
    return make_result(x.shape(), std::move(out), {px}, op, [px, df](Node& self) {
        for (std::size_t i = 0; i < self.grad.size(); ++i) px->grad[i] += self.grad[i] * df(px->data[i], self.data[i]);
    });
}

template <class F, class DA, class DB>
Tensor binary(const Tensor& a, const Tensor& b, const char* op, F f, DA da, DB db) {
    require_same_shape(a, b, op);
    auto as = a.data();
    auto bs = b.data();
    std::vector<double> out(as.size());
    for (std::size_t i = 0; i < as.size(); ++i) out[i] = f(as[i], bs[i]);
    auto pa = a.node();
    auto pb = b.node();
    return make_result(a.shape(), std::move(out), {pa, pb}, op, [pa, pb, da, db](Node& self) {
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
            const double g = self.grad[i];
            if (pa->requires_grad) pa->grad[i] += g * da(pa->data[i], pb->data[i]);
            if (pb->requires_grad) pb->grad[i] += g * db(pa->data[i], pb->data[i]);
        }
    });
}

double sigmoid_scalar(double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

}  // namespace

// --- linear algebra --------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.extent(1) != b.extent(0)) {
        throw ShapeError("matmul: incompatible shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
    }
    const std::size_t m = a.extent(0), k = a.extent(1), n = b.extent(1);
    MacCounter::record(static_cast<std::uint64_t>(m) * k * n);
    auto as = a.data();
    auto bs = b.data();
    std::vector<double> out(m * n, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
            const double av = as[i * k + p];
            for (std::size_t j = 0; j < n; ++j) out[i * n + j] += av * bs[p * n + j];
        }
    }
    auto pa = a.node();
    auto pb = b.node();
    return make_result({m, n}, std::move(out), {pa, pb}, "matmul", [pa, pb, m, k, n](Node& self) {
        const auto& g = self.grad;
        if (pa->requires_grad) {
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t p = 0; p < k; ++p) {
                    double acc = 0.0;
                    for (std::size_t j = 0; j < n; ++j) acc += g[i * n + j] * pb->data[p * n + j];
                    pa->grad[i * k + p] += acc;
                }
        }
        if (pb->requires_grad) {
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t p = 0; p < k; ++p) {
                    const double av = pa->data[i * k + p];
                    for (std::size_t j = 0; j < n; ++j) pb->grad[p * n + j] += av * g[i * n + j];
                }
        }
    });
}

Tensor axis_linear(const Tensor& x, std::size_t axis, const Tensor& w, const std::optional<Tensor>& b) {
    require_axis(x, axis, "axis_linear");
    require_rank(w, 2, "axis_linear weight");
    const auto v = axis_view(x.shape(), axis);
    const std::size_t in = w.extent(0), out_n = w.extent(1);
    if (v.n != in) {
        throw ShapeError("axis_linear: extent " + std::to_string(v.n) + " of " + shape_str(x.shape()) + " along axis " +
                         std::to_string(axis) + " does not match weight " + shape_str(w.shape()));
    }
    if (b && (b->rank() != 1 || b->extent(0) != out_n)) {
        throw ShapeError("axis_linear: bias " + shape_str(b->shape()) + " does not match weight " +
                         shape_str(w.shape()));
    }
    MacCounter::record(static_cast<std::uint64_t>(v.outer) * in * out_n * v.inner);

    Shape shape = x.shape();
    shape[axis] = out_n;
    auto xs = x.data();
    auto ws = w.data();
    std::vector<double> out(v.outer * out_n * v.inner, 0.0);
    for (std::size_t o = 0; o < v.outer; ++o) {
        double* dst = out.data() + o * out_n * v.inner;
        if (b) {
            auto bs = b->data();
            for (std::size_t j = 0; j < out_n; ++j)
                for (std::size_t i = 0; i < v.inner; ++i) dst[j * v.inner + i] = bs[j];
        }
        for (std::size_t p = 0; p < in; ++p) {
            const double* src = xs.data() + (o * in + p) * v.inner;
            for (std::size_t j = 0; j < out_n; ++j) {
                const double wv = ws[p * out_n + j];
                double* d = dst + j * v.inner;
                for (std::size_t i = 0; i < v.inner; ++i) d[i] += src[i] * wv;
            }
        }
    }

    std::vector<std::shared_ptr<Node>> parents{x.node(), w.node()};
    if (b) parents.push_back(b->node());
    auto px = x.node();
    auto pw = w.node();
    auto pb = b ? b->node() : nullptr;
    return make_result(std::move(shape), std::move(out), std::move(parents), "axis_linear",
                       [px, pw, pb, v, in, out_n](Node& self) {
                           const auto& g = self.grad;
                           for (std::size_t o = 0; o < v.outer; ++o) {
                               const double* gs = g.data() + o * out_n * v.inner;
                               for (std::size_t p = 0; p < in; ++p) {
                                   const double* xsrc = px->data.data() + (o * in + p) * v.inner;
                                   for (std::size_t j = 0; j < out_n; ++j) {
                                       const double* gj = gs + j * v.inner;
                                       if (px->requires_grad) {
                                           const double wv = pw->data[p * out_n + j];
                                           double* gx = px->grad.data() + (o * in + p) * v.inner;
                                           for (std::size_t i = 0; i < v.inner; ++i) gx[i] += gj[i] * wv;
                                       }
                                       if (pw->requires_grad) {
                                           double acc = 0.0;
                                           for (std::size_t i = 0; i < v.inner; ++i) acc += xsrc[i] * gj[i];
                                           pw->grad[p * out_n + j] += acc;
                                       }
                                   }
                               }
                               if (pb && pb->requires_grad) {
                                   for (std::size_t j = 0; j < out_n; ++j)
                                       for (std::size_t i = 0; i < v.inner; ++i) pb->grad[j] += gs[j * v.inner + i];
                               }
                           }
                       });
}

Tensor transpose(const Tensor& x) {
    require_rank(x, 2, "transpose");
    const std::size_t axes[] = {1, 0};
    return permute(x, axes);
}

// --- elementwise -----------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
    return binary(
        a, b, "add", [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
        [](double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    return binary(
        a, b, "sub", [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
        [](double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    return binary(
        a, b, "mul", [](double x, double y) { return x * y; }, [](double, double y) { return y; },
        [](double x, double) { return x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
    return binary(
        a, b, "div", [](double x, double y) { return x / y; }, [](double, double y) { return 1.0 / y; },
        [](double x, double y) { return -x / (y * y); });
}

// Ties route the gradient to the first argument.
Tensor minimum(const Tensor& a, const Tensor& b) {
    return binary(
        a, b, "minimum", [](double x, double y) { return std::min(x, y); },
        [](double x, double y) { return x <= y ? 1.0 : 0.0; }, [](double x, double y) { return x <= y ? 0.0 : 1.0; });
}

Tensor maximum(const Tensor& a, const Tensor& b) {
    return binary(
        a, b, "maximum", [](double x, double y) { return std::max(x, y); },
        [](double x, double y) { return x >= y ? 1.0 : 0.0; }, [](double x, double y) { return x >= y ? 0.0 : 1.0; });
}

Tensor scale(const Tensor& x, double s) {
    return unary(x, "scale", [s](double v) { return v * s; }, [s](double, double) { return s; });
}

Tensor add_scalar(const Tensor& x, double s) {
    return unary(x, "add_scalar", [s](double v) { return v + s; }, [](double, double) { return 1.0; });
}

Tensor neg(const Tensor& x) { return scale(x, -1.0); }

Tensor abs(const Tensor& x) {
    return unary(
        x, "abs", [](double v) { return std::fabs(v); },
        [](double v, double) { return v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0); });
}

Tensor exp(const Tensor& x) {
    return unary(x, "exp", [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& x) {
    return unary(x, "log", [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

Tensor sigmoid(const Tensor& x) {
    return unary(x, "sigmoid", sigmoid_scalar, [](double, double y) { return y * (1.0 - y); });
}

Tensor silu(const Tensor& x) {
    return unary(
        x, "silu", [](double v) { return v * sigmoid_scalar(v); },
        [](double v, double) {
            const double s = sigmoid_scalar(v);
            return s * (1.0 + v * (1.0 - s));
        });
}

Tensor relu(const Tensor& x) {
    return unary(
        x, "relu", [](double v) { return v > 0 ? v : 0.0; }, [](double v, double) { return v > 0 ? 1.0 : 0.0; });
}

Tensor add_row(const Tensor& x, const Tensor& row) {
    require_rank(row, 1, "add_row");
    const std::size_t n = row.extent(0);
    if (x.rank() == 0 || x.shape().back() != n) {
        throw ShapeError("add_row: row " + shape_str(row.shape()) + " does not match last axis of " +
                         shape_str(x.shape()));
    }
    auto xs = x.data();
    auto rs = row.data();
    std::vector<double> out(xs.begin(), xs.end());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += rs[i % n];
    auto px = x.node();
    auto pr = row.node();
    return make_result(x.shape(), std::move(out), {px, pr}, "add_row", [px, pr, n](Node& self) {
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
            if (px->requires_grad) px->grad[i] += self.grad[i];
            if (pr->requires_grad) pr->grad[i % n] += self.grad[i];
        }
    });
}

// --- reductions / normalization -------------------------------------------

Tensor sum(const Tensor& x) {
    auto xs = x.data();
    double s = 0.0;
    for (double v : xs) s += v;
    auto px = x.node();
    return make_result({1}, {s}, {px}, "sum", [px](Node& self) {
        for (auto& g : px->grad) g += self.grad[0];
    });
}

Tensor mean(const Tensor& x) { return scale(sum(x), 1.0 / static_cast<double>(x.size())); }

Tensor softmax(const Tensor& x, std::size_t axis) {
    require_axis(x, axis, "softmax");
    const auto v = axis_view(x.shape(), axis);
    auto xs = x.data();
    std::vector<double> out(xs.size());
    for (std::size_t o = 0; o < v.outer; ++o)
        for (std::size_t i = 0; i < v.inner; ++i) {
            const std::size_t base = o * v.n * v.inner + i;
            double mx = xs[base];
            for (std::size_t k = 1; k < v.n; ++k) mx = std::max(mx, xs[base + k * v.inner]);
            double z = 0.0;
            for (std::size_t k = 0; k < v.n; ++k) {
                const double e = std::exp(xs[base + k * v.inner] - mx);
                out[base + k * v.inner] = e;
                z += e;
            }
            for (std::size_t k = 0; k < v.n; ++k) out[base + k * v.inner] /= z;
        }
    auto px = x.node();
    return make_result(x.shape(), std::move(out), {px}, "softmax", [px, v](Node& self) {
        for (std::size_t o = 0; o < v.outer; ++o)
            for (std::size_t i = 0; i < v.inner; ++i) {
                const std::size_t base = o * v.n * v.inner + i;
                double dot = 0.0;
                for (std::size_t k = 0; k < v.n; ++k) dot += self.grad[base + k * v.inner] * self.data[base + k * v.inner];
                for (std::size_t k = 0; k < v.n; ++k) {
                    const std::size_t at = base + k * v.inner;
                    px->grad[at] += self.data[at] * (self.grad[at] - dot);
                }
            }
    });
}

Tensor log_softmax(const Tensor& x, std::size_t axis) {
    require_axis(x, axis, "log_softmax");
    const auto v = axis_view(x.shape(), axis);
    auto xs = x.data();
    std::vector<double> out(xs.size());
    for (std::size_t o = 0; o < v.outer; ++o)
        for (std::size_t i = 0; i < v.inner; ++i) {
            const std::size_t base = o * v.n * v.inner + i;
            double mx = xs[base];
            for (std::size_t k = 1; k < v.n; ++k) mx = std::max(mx, xs[base + k * v.inner]);
            double z = 0.0;
            for (std::size_t k = 0; k < v.n; ++k) z += std::exp(xs[base + k * v.inner] - mx);
            const double lse = mx + std::log(z);
            for (std::size_t k = 0; k < v.n; ++k) out[base + k * v.inner] = xs[base + k * v.inner] - lse;
        }
    auto px = x.node();
    return make_result(x.shape(), std::move(out), {px}, "log_softmax", [px, v](Node& self) {
        for (std::size_t o = 0; o < v.outer; ++o)
            for (std::size_t i = 0; i < v.inner; ++i) {
                const std::size_t base = o * v.n * v.inner + i;
                double gsum = 0.0;
                for (std::size_t k = 0; k < v.n; ++k) gsum += self.grad[base + k * v.inner];
                for (std::size_t k = 0; k < v.n; ++k) {
                    const std::size_t at = base + k * v.inner;
                    px->grad[at] += self.grad[at] - std::exp(self.data[at]) * gsum;
                }
            }
    });
}

namespace {

Tensor layer_norm_impl(const Tensor& x, std::size_t axis, const Tensor* gamma, const Tensor* beta, double eps) {
    require_axis(x, axis, "layer_norm");
    if (eps < 0) throw ValueError("layer_norm: eps must be non-negative");
    const auto v = axis_view(x.shape(), axis);
    if (gamma && (gamma->rank() != 1 || gamma->extent(0) != v.n || beta->rank() != 1 || beta->extent(0) != v.n)) {
        throw ShapeError("layer_norm: gamma " + shape_str(gamma->shape()) + " / beta " + shape_str(beta->shape()) +
                         " must match extent " + std::to_string(v.n) + " of axis " + std::to_string(axis));
    }
    auto xs = x.data();
    std::vector<double> xhat(xs.size());
    std::vector<double> rstd(v.outer * v.inner);
    for (std::size_t o = 0; o < v.outer; ++o)
        for (std::size_t i = 0; i < v.inner; ++i) {
            const std::size_t base = o * v.n * v.inner + i;
            double mu = 0.0;
            for (std::size_t k = 0; k < v.n; ++k) mu += xs[base + k * v.inner];
            mu /= static_cast<double>(v.n);
            double var = 0.0;
            for (std::size_t k = 0; k < v.n; ++k) {
                const double d = xs[base + k * v.inner] - mu;
                var += d * d;
            }
            var /= static_cast<double>(v.n);
            if (var + eps <= 0.0) throw ValueError("layer_norm: division by zero (zero-variance slice with eps = 0)");
            const double r = 1.0 / std::sqrt(var + eps);
            rstd[o * v.inner + i] = r;
            for (std::size_t k = 0; k < v.n; ++k) xhat[base + k * v.inner] = (xs[base + k * v.inner] - mu) * r;
        }

    std::vector<double> out = xhat;
    std::vector<std::shared_ptr<Node>> parents{x.node()};
    std::shared_ptr<Node> pg, pbeta;
    if (gamma) {
        auto gs = gamma->data();
        auto bs = beta->data();
        for (std::size_t idx = 0; idx < out.size(); ++idx) {
            const std::size_t k = (idx / v.inner) % v.n;
            out[idx] = gs[k] * xhat[idx] + bs[k];
        }
        pg = gamma->node();
        pbeta = beta->node();
        parents.push_back(pg);
        parents.push_back(pbeta);
    }
    auto px = x.node();
    return make_result(
        x.shape(), std::move(out), std::move(parents), gamma ? "layer_norm" : "normalize",
        [px, pg, pbeta, v, xhat = std::move(xhat), rstd = std::move(rstd)](Node& self) {
            std::vector<double> gxh(v.n);
            for (std::size_t o = 0; o < v.outer; ++o)
                for (std::size_t i = 0; i < v.inner; ++i) {
                    const std::size_t base = o * v.n * v.inner + i;
                    double m1 = 0.0, m2 = 0.0;
                    for (std::size_t k = 0; k < v.n; ++k) {
                        const std::size_t at = base + k * v.inner;
                        const double g = self.grad[at];
                        if (pg) {
                            if (pg->requires_grad) pg->grad[k] += g * xhat[at];
                            if (pbeta->requires_grad) pbeta->grad[k] += g;
                        }
                        gxh[k] = pg ? g * pg->data[k] : g;
                        m1 += gxh[k];
                        m2 += gxh[k] * xhat[at];
                    }
                    if (!px->requires_grad) continue;
                    m1 /= static_cast<double>(v.n);
                    m2 /= static_cast<double>(v.n);
                    const double r = rstd[o * v.inner + i];
                    for (std::size_t k = 0; k < v.n; ++k) {
                        const std::size_t at = base + k * v.inner;
                        px->grad[at] += r * (gxh[k] - m1 - xhat[at] * m2);
                    }
                }
        });
}

}  // namespace

Tensor layer_norm(const Tensor& x, std::size_t axis, const Tensor& gamma, const Tensor& beta, double eps) {
    return layer_norm_impl(x, axis, &gamma, &beta, eps);
}

Tensor normalize(const Tensor& x, std::size_t axis, double eps) { return layer_norm_impl(x, axis, nullptr, nullptr, eps); }

// --- data movement ---------------------------------------------------------

Tensor gather(const Tensor& x, Shape out_shape, std::vector<std::size_t> index, const char* op) {
    if (index.size() != numel(out_shape)) {
        throw ShapeError(std::string(op) + ": index length does not match output shape " + shape_str(out_shape));
    }
    auto xs = x.data();
    std::vector<double> out(index.size());
    for (std::size_t i = 0; i < index.size(); ++i) {
        if (index[i] >= xs.size()) throw ShapeError(std::string(op) + ": gather index out of range");
        out[i] = xs[index[i]];
    }
    auto px = x.node();
    return make_result(std::move(out_shape), std::move(out), {px}, op, [px, index = std::move(index)](Node& self) {
        for (std::size_t i = 0; i < index.size(); ++i) px->grad[index[i]] += self.grad[i];
    });
}

Tensor reshape(const Tensor& x, Shape shape) {
    if (numel(shape) != x.size()) {
        throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
    }
    std::vector<std::size_t> index(x.size());
    std::iota(index.begin(), index.end(), std::size_t{0});
    return gather(x, std::move(shape), std::move(index), "reshape");
}

Tensor permute(const Tensor& x, std::span<const std::size_t> axes) {
    const auto& s = x.shape();
    if (axes.size() != s.size()) throw ShapeError("permute: axis list does not match rank of " + shape_str(s));
    std::vector<bool> used(s.size(), false);
    for (auto a : axes) {
        if (a >= s.size() || used[a]) throw ShapeError("permute: invalid axis permutation");
        used[a] = true;
    }
    std::vector<std::size_t> in_strides(s.size(), 1);
    for (std::size_t i = s.size(); i-- > 1;) in_strides[i - 1] = in_strides[i] * s[i];
    Shape out_shape(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) out_shape[i] = s[axes[i]];
    std::vector<std::size_t> index(x.size());
    std::vector<std::size_t> counter(s.size(), 0);
    for (std::size_t flat = 0; flat < index.size(); ++flat) {
        std::size_t src = 0;
        for (std::size_t i = 0; i < s.size(); ++i) src += counter[i] * in_strides[axes[i]];
        index[flat] = src;
        for (std::size_t i = s.size(); i-- > 0;) {
            if (++counter[i] < out_shape[i]) break;
            counter[i] = 0;
        }
    }
    return gather(x, std::move(out_shape), std::move(index), "permute");
}

Tensor slice(const Tensor& x, std::size_t axis, std::size_t begin, std::size_t end) {
    require_axis(x, axis, "slice");
    if (begin >= end || end > x.extent(axis)) {
        throw ShapeError("slice: invalid range [" + std::to_string(begin) + "," + std::to_string(end) + ") for " +
                         shape_str(x.shape()));
    }
    std::vector<std::size_t> idx(end - begin);
    std::iota(idx.begin(), idx.end(), begin);
    return index_select(x, axis, idx);
}

Tensor index_select(const Tensor& x, std::size_t axis, std::span<const std::size_t> indices) {
    require_axis(x, axis, "index_select");
    if (indices.empty()) throw ShapeError("index_select: empty index list");
    const auto v = axis_view(x.shape(), axis);
    Shape shape = x.shape();
    shape[axis] = indices.size();
    std::vector<std::size_t> index;
    index.reserve(numel(shape));
    for (std::size_t o = 0; o < v.outer; ++o)
        for (auto k : indices) {
            if (k >= v.n) throw ShapeError("index_select: index out of range");
            for (std::size_t i = 0; i < v.inner; ++i) index.push_back((o * v.n + k) * v.inner + i);
        }
    return gather(x, std::move(shape), std::move(index), "index_select");
}

Tensor concat(std::span<const Tensor> xs, std::size_t axis) {
    if (xs.empty()) throw ShapeError("concat: no inputs");
    require_axis(xs[0], axis, "concat");
    if (xs.size() == 1) return xs[0];
    Shape shape = xs[0].shape();
    shape[axis] = 0;
    for (const auto& t : xs) {
        bool ok = t.rank() == shape.size();
        for (std::size_t i = 0; ok && i < shape.size(); ++i) ok = i == axis || t.extent(i) == shape[i];
        if (!ok) {
            throw ShapeError("concat: shape " + shape_str(t.shape()) + " incompatible with " +
                             shape_str(xs[0].shape()) + " off axis " + std::to_string(axis));
        }
        shape[axis] += t.extent(axis);
    }
    const auto v = axis_view(shape, axis);
    std::vector<double> out(numel(shape));
    std::vector<std::shared_ptr<Node>> parents;
    std::vector<std::size_t> offsets;
    std::size_t offset = 0;
    for (const auto& t : xs) {
        const std::size_t n = t.extent(axis);
        auto ts = t.data();
        for (std::size_t o = 0; o < v.outer; ++o)
            std::copy_n(ts.data() + o * n * v.inner, n * v.inner, out.data() + (o * v.n + offset) * v.inner);
        parents.push_back(t.node());
        offsets.push_back(offset);
        offset += n;
    }
    auto ps = parents;
    return make_result(std::move(shape), std::move(out), std::move(parents), "concat",
                       [ps = std::move(ps), offsets = std::move(offsets), v](Node& self) {
                           for (std::size_t t = 0; t < ps.size(); ++t) {
                               if (!ps[t]->requires_grad) continue;
                               const std::size_t n = ps[t]->data.size() / (v.outer * v.inner);
                               for (std::size_t o = 0; o < v.outer; ++o) {
                                   const double* src = self.grad.data() + (o * v.n + offsets[t]) * v.inner;
                                   double* dst = ps[t]->grad.data() + o * n * v.inner;
                                   for (std::size_t i = 0; i < n * v.inner; ++i) dst[i] += src[i];
                               }
                           }
                       });
}

Tensor concat(std::initializer_list<Tensor> xs, std::size_t axis) {
    return concat(std::span<const Tensor>(xs.begin(), xs.size()), axis);
}

Tensor space_to_depth(const Tensor& x, std::size_t s) {
    require_rank(x, 3, "space_to_depth");
    const std::size_t c = x.extent(0), h = x.extent(1), w = x.extent(2);
    if (s == 0 || h % s || w % s) {
        throw ShapeError("space_to_depth: block " + std::to_string(s) + " does not divide " + shape_str(x.shape()));
    }
    const std::size_t ho = h / s, wo = w / s;
    std::vector<std::size_t> index;
    index.reserve(x.size());
    for (std::size_t ci = 0; ci < c; ++ci)
        for (std::size_t dy = 0; dy < s; ++dy)
            for (std::size_t dx = 0; dx < s; ++dx)
                for (std::size_t y = 0; y < ho; ++y)
                    for (std::size_t xx = 0; xx < wo; ++xx) index.push_back((ci * h + y * s + dy) * w + xx * s + dx);
    return gather(x, {c * s * s, ho, wo}, std::move(index), "space_to_depth");
}

Tensor depth_to_space(const Tensor& x, std::size_t s) {
    require_rank(x, 3, "depth_to_space");
    const std::size_t cs = x.extent(0), h = x.extent(1), w = x.extent(2);
    if (s == 0 || cs % (s * s)) {
        throw ShapeError("depth_to_space: block " + std::to_string(s) + " does not divide channels of " +
                         shape_str(x.shape()));
    }
    const std::size_t c = cs / (s * s);
    std::vector<std::size_t> index;
    index.reserve(x.size());
    for (std::size_t ci = 0; ci < c; ++ci)
        for (std::size_t y = 0; y < h * s; ++y)
            for (std::size_t xx = 0; xx < w * s; ++xx) {
                const std::size_t ch = ci * s * s + (y % s) * s + (xx % s);
                index.push_back((ch * h + y / s) * w + xx / s);
            }
    return gather(x, {c, h * s, w * s}, std::move(index), "depth_to_space");
}

Tensor grid_partition(const Tensor& x, std::size_t g) {
    require_rank(x, 3, "grid_partition");
    const std::size_t c = x.extent(0), h = x.extent(1), w = x.extent(2);
    if (g == 0 || h % g || w % g) {
        throw ShapeError("grid_partition: grid " + std::to_string(g) + " does not divide " + shape_str(x.shape()));
    }
    const std::size_t gh = h / g, gw = w / g;
    std::vector<std::size_t> index;
    index.reserve(x.size());
    for (std::size_t gy = 0; gy < gh; ++gy)
        for (std::size_t gx = 0; gx < gw; ++gx)
            for (std::size_t cy = 0; cy < g; ++cy)
                for (std::size_t cx = 0; cx < g; ++cx)
                    for (std::size_t ci = 0; ci < c; ++ci) index.push_back((ci * h + gy * g + cy) * w + gx * g + cx);
    return gather(x, {gh * gw, g * g, c}, std::move(index), "grid_partition");
}

Tensor grid_merge(const Tensor& q, std::size_t height, std::size_t width, std::size_t g) {
    require_rank(q, 3, "grid_merge");
    const std::size_t ng = q.extent(0), k = q.extent(1), c = q.extent(2);
    if (g == 0 || k != g * g || ng * k != height * width || height % g || width % g ||
        (height / g) * (width / g) != ng) {
        throw ShapeError("grid_merge: " + shape_str(q.shape()) + " inconsistent with " + std::to_string(height) + "x" +
                         std::to_string(width) + " map and grid " + std::to_string(g));
    }
    const std::size_t gw = width / g;
    std::vector<std::size_t> index;
    index.reserve(q.size());
    for (std::size_t ci = 0; ci < c; ++ci)
        for (std::size_t y = 0; y < height; ++y)
            for (std::size_t xx = 0; xx < width; ++xx) {
                const std::size_t grid = (y / g) * gw + xx / g;
                const std::size_t cell = (y % g) * g + xx % g;
                index.push_back((grid * k + cell) * c + ci);
            }
    return gather(q, {c, height, width}, std::move(index), "grid_merge");
}

Tensor bilinear_resize(const Tensor& x, std::size_t out_h, std::size_t out_w) {
    require_rank(x, 3, "bilinear_resize");
    if (out_h == 0 || out_w == 0) throw ShapeError("bilinear_resize: target extents must be positive");
    const std::size_t c = x.extent(0), h = x.extent(1), w = x.extent(2);
    if (out_h == h && out_w == w) return x;
    MacCounter::record(static_cast<std::uint64_t>(4) * c * out_h * out_w);

    struct Tap {
        std::size_t lo, hi;
        double frac;
    };
    auto taps = [](std::size_t in, std::size_t out) {
        std::vector<Tap> t(out);
        const double ratio = static_cast<double>(in) / static_cast<double>(out);
        for (std::size_t i = 0; i < out; ++i) {
            double src = (static_cast<double>(i) + 0.5) * ratio - 0.5;
            src = std::clamp(src, 0.0, static_cast<double>(in - 1));
            const auto lo = static_cast<std::size_t>(std::floor(src));
            t[i] = {lo, std::min(lo + 1, in - 1), src - static_cast<double>(lo)};
        }
        return t;
    };
    const auto ty = taps(h, out_h);
    const auto tx = taps(w, out_w);
    auto xs = x.data();
    std::vector<double> out(c * out_h * out_w);
    for (std::size_t ci = 0; ci < c; ++ci) {
        const double* src = xs.data() + ci * h * w;
        for (std::size_t i = 0; i < out_h; ++i)
            for (std::size_t j = 0; j < out_w; ++j) {
                const auto& a = ty[i];
                const auto& b = tx[j];
                const double top = src[a.lo * w + b.lo] * (1 - b.frac) + src[a.lo * w + b.hi] * b.frac;
                const double bot = src[a.hi * w + b.lo] * (1 - b.frac) + src[a.hi * w + b.hi] * b.frac;
                out[(ci * out_h + i) * out_w + j] = top * (1 - a.frac) + bot * a.frac;
            }
    }
    auto px = x.node();
    return make_result({c, out_h, out_w}, std::move(out), {px}, "bilinear_resize",
                       [px, ty, tx, c, h, w, out_h, out_w](Node& self) {
                           for (std::size_t ci = 0; ci < c; ++ci) {
                               double* gx = px->grad.data() + ci * h * w;
                               for (std::size_t i = 0; i < out_h; ++i)
                                   for (std::size_t j = 0; j < out_w; ++j) {
                                       const double g = self.grad[(ci * out_h + i) * out_w + j];
                                       const auto& a = ty[i];
                                       const auto& b = tx[j];
                                       gx[a.lo * w + b.lo] += g * (1 - a.frac) * (1 - b.frac);
                                       gx[a.lo * w + b.hi] += g * (1 - a.frac) * b.frac;
                                       gx[a.hi * w + b.lo] += g * a.frac * (1 - b.frac);
                                       gx[a.hi * w + b.hi] += g * a.frac * b.frac;
                                   }
                           }
                       });
}

Tensor to_tokens(const Tensor& x) {
    require_rank(x, 3, "to_tokens");
    const std::size_t c = x.extent(0), hw = x.extent(1) * x.extent(2);
    return transpose(reshape(x, {c, hw}));
}

Tensor from_tokens(const Tensor& tokens, std::size_t height, std::size_t width) {
    require_rank(tokens, 2, "from_tokens");
    if (tokens.extent(0) != height * width) {
        throw ShapeError("from_tokens: " + shape_str(tokens.shape()) + " does not hold a " + std::to_string(height) +
                         "x" + std::to_string(width) + " map");
    }
    return reshape(transpose(tokens), {tokens.extent(1), height, width});
}

}  // namespace cred::ops
