#include "dipro/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <unordered_set>

#include "dipro/errors.hpp"
#include "dipro/kernels.hpp"

namespace dipro {

namespace {

std::atomic<std::uint64_t> g_next_id{1};

std::size_t shape_numel(const std::vector<int>& shape) {
    std::size_t n = 1;
    for (int d : shape) {
        if (d <= 0) throw DimError("tensor shape has non-positive dim " + shape_str(shape));
        n *= static_cast<std::size_t>(d);
    }
    return n;
}

std::shared_ptr<TensorNode> make_leaf(std::vector<int> shape, std::vector<double> values,
                                      bool requires_grad) {
    auto node = std::make_shared<TensorNode>();
    node->shape = std::move(shape);
    if (shape_numel(node->shape) != values.size()) {
        throw DimError("tensor values length " + std::to_string(values.size()) +
                       " does not match shape " + shape_str(node->shape));
    }
    node->values = std::move(values);
    node->requires_grad = requires_grad;
    node->id = g_next_id.fetch_add(1);
    if (requires_grad) node->ensure_grad();
    return node;
}

Tensor make_op(std::vector<int> shape, std::vector<double> values,
               std::vector<Tensor> parents, std::function<void(TensorNode&)> backprop) {
    auto node = std::make_shared<TensorNode>();
    node->shape = std::move(shape);
    node->values = std::move(values);
    node->is_leaf = false;
    node->id = g_next_id.fetch_add(1);
    bool needs = false;
    node->parents.reserve(parents.size());
    for (const auto& p : parents) {
        needs = needs || p.node().requires_grad;
        node->parents.push_back(p.ptr());
    }
    node->requires_grad = needs;
    if (needs) node->backprop = std::move(backprop);
    return Tensor(std::move(node));
}

// Rows/cols of a tensor interpreted as a matrix (1-D = one row).
void as_matrix(const Tensor& t, int& r, int& c) {
    const auto& s = t.shape();
    if (s.size() == 1) {
        r = 1;
        c = s[0];
    } else if (s.size() == 2) {
        r = s[0];
        c = s[1];
    } else {
        throw DimError("expected 1-D or 2-D tensor, got " + shape_str(s));
    }
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw DimError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                       shape_str(b.shape()));
    }
}

constexpr double kInf = std::numeric_limits<double>::infinity();

}  // namespace

std::string shape_str(const std::vector<int>& shape) {
    std::string s = "(";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += "x";
        s += std::to_string(shape[i]);
    }
    return s + ")";
}

Tensor Tensor::zeros(std::vector<int> shape, bool requires_grad) {
    std::size_t n = shape_numel(shape);
    return Tensor(make_leaf(std::move(shape), std::vector<double>(n, 0.0), requires_grad));
}

Tensor Tensor::full(std::vector<int> shape, double value, bool requires_grad) {
    std::size_t n = shape_numel(shape);
    return Tensor(make_leaf(std::move(shape), std::vector<double>(n, value), requires_grad));
}

Tensor Tensor::from(std::vector<int> shape, std::vector<double> values, bool requires_grad) {
    return Tensor(make_leaf(std::move(shape), std::move(values), requires_grad));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
    return Tensor(make_leaf({1}, {value}, requires_grad));
}

Tensor Tensor::uniform(std::vector<int> shape, double limit, Rng& rng, bool requires_grad) {
    std::size_t n = shape_numel(shape);
    std::vector<double> v(n);
    for (auto& x : v) x = rng.uniform(-limit, limit);
    return Tensor(make_leaf(std::move(shape), std::move(v), requires_grad));
}

int Tensor::rows() const {
    int r, c;
    as_matrix(*this, r, c);
    return r;
}

int Tensor::cols() const {
    int r, c;
    as_matrix(*this, r, c);
    return c;
}

std::span<const double> Tensor::grad() const {
    const_cast<TensorNode&>(*node_).ensure_grad();
    return node_->grad;
}

void Tensor::zero_grad() {
    node_->ensure_grad();
    std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

double Tensor::item() const {
    if (size() != 1) throw ContractError("item(): tensor is not scalar, shape " + shape_str(shape()));
    return node_->values[0];
}

double Tensor::at(int r, int c) const {
    int rr, cc;
    as_matrix(*this, rr, cc);
    return node_->values[static_cast<std::size_t>(r) * cc + c];
}

// ---- ops ----

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.ndim() != 2 || b.ndim() != 2) {
        throw DimError("matmul: expected 2-D operands, got " + shape_str(a.shape()) + " and " +
                       shape_str(b.shape()));
    }
    const int m = a.dim(0), k = a.dim(1), k2 = b.dim(0), n = b.dim(1);
    if (k != k2) {
        throw DimError("matmul: inner dimensions disagree, " + shape_str(a.shape()) + " x " +
                       shape_str(b.shape()));
    }
    const auto& ker = kernels::active();
    std::vector<double> out(static_cast<std::size_t>(m) * n, 0.0);
    const double* av = a.values().data();
    const double* bv = b.values().data();
    for (int i = 0; i < m; ++i) {
        double* orow = out.data() + static_cast<std::size_t>(i) * n;
        for (int kk = 0; kk < k; ++kk) {
            ker.axpy(av[static_cast<std::size_t>(i) * k + kk],
                     bv + static_cast<std::size_t>(kk) * n, orow, static_cast<std::size_t>(n));
        }
    }
    return make_op({m, n}, std::move(out), {a, b}, [m, k, n](TensorNode& node) {
        const auto& ker = kernels::active();
        auto& pa = *node.parents[0];
        auto& pb = *node.parents[1];
        const double* g = node.grad.data();
        if (pa.requires_grad) {
            pa.ensure_grad();
            // dA[i,kk] = dot(dC[i,:], B[kk,:])
            for (int i = 0; i < m; ++i) {
                const double* grow = g + static_cast<std::size_t>(i) * n;
                for (int kk = 0; kk < k; ++kk) {
                    pa.grad[static_cast<std::size_t>(i) * k + kk] +=
                        ker.dot(grow, pb.values.data() + static_cast<std::size_t>(kk) * n,
                                static_cast<std::size_t>(n));
                }
            }
        }
        if (pb.requires_grad) {
            pb.ensure_grad();
            // dB[kk,:] += A[i,kk] * dC[i,:]
            for (int i = 0; i < m; ++i) {
                const double* grow = g + static_cast<std::size_t>(i) * n;
                for (int kk = 0; kk < k; ++kk) {
                    ker.axpy(pa.values[static_cast<std::size_t>(i) * k + kk], grow,
                             pb.grad.data() + static_cast<std::size_t>(kk) * n,
                             static_cast<std::size_t>(n));
                }
            }
        }
    });
}

Tensor transpose(const Tensor& a) {
    if (a.ndim() != 2) throw DimError("transpose: expected 2-D tensor, got " + shape_str(a.shape()));
    const int r = a.dim(0), c = a.dim(1);
    std::vector<double> out(a.size());
    const double* av = a.values().data();
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j)
            out[static_cast<std::size_t>(j) * r + i] = av[static_cast<std::size_t>(i) * c + j];
    return make_op({c, r}, std::move(out), {a}, [r, c](TensorNode& node) {
        auto& p = *node.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        for (int i = 0; i < r; ++i)
            for (int j = 0; j < c; ++j)
                p.grad[static_cast<std::size_t>(i) * c + j] +=
                    node.grad[static_cast<std::size_t>(j) * r + i];
    });
}

Tensor add(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "add");
    std::vector<double> out(a.size());
    kernels::active().add(a.values().data(), b.values().data(), out.data(), a.size());
    return make_op(a.shape(), std::move(out), {a, b}, [](TensorNode& node) {
        for (int which = 0; which < 2; ++which) {
            auto& p = *node.parents[which];
            if (!p.requires_grad) continue;
            p.ensure_grad();
            kernels::active().axpy(1.0, node.grad.data(), p.grad.data(), node.size());
        }
    });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "sub");
    std::vector<double> out(a.size());
    kernels::active().sub(a.values().data(), b.values().data(), out.data(), a.size());
    return make_op(a.shape(), std::move(out), {a, b}, [](TensorNode& node) {
        auto& pa = *node.parents[0];
        auto& pb = *node.parents[1];
        if (pa.requires_grad) {
            pa.ensure_grad();
            kernels::active().axpy(1.0, node.grad.data(), pa.grad.data(), node.size());
        }
        if (pb.requires_grad) {
            pb.ensure_grad();
            kernels::active().axpy(-1.0, node.grad.data(), pb.grad.data(), node.size());
        }
    });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "mul");
    std::vector<double> out(a.size());
    kernels::active().mul(a.values().data(), b.values().data(), out.data(), a.size());
    return make_op(a.shape(), std::move(out), {a, b}, [](TensorNode& node) {
        auto& pa = *node.parents[0];
        auto& pb = *node.parents[1];
        if (pa.requires_grad) {
            pa.ensure_grad();
            for (std::size_t i = 0; i < node.size(); ++i)
                pa.grad[i] += node.grad[i] * pb.values[i];
        }
        if (pb.requires_grad) {
            pb.ensure_grad();
            for (std::size_t i = 0; i < node.size(); ++i)
                pb.grad[i] += node.grad[i] * pa.values[i];
        }
    });
}

Tensor scale(const Tensor& a, double s) {
    std::vector<double> out(a.size());
    kernels::active().scale(a.values().data(), s, out.data(), a.size());
    return make_op(a.shape(), std::move(out), {a}, [s](TensorNode& node) {
        auto& p = *node.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        kernels::active().axpy(s, node.grad.data(), p.grad.data(), node.size());
    });
}

Tensor add_rowvec(const Tensor& m, const Tensor& v) {
    int r, c, vr, vc;
    as_matrix(m, r, c);
    as_matrix(v, vr, vc);
    if (vr != 1 || vc != c) {
        throw DimError("add_rowvec: vector " + shape_str(v.shape()) + " does not match columns of " +
                       shape_str(m.shape()));
    }
    std::vector<double> out(m.size());
    const auto& ker = kernels::active();
    for (int i = 0; i < r; ++i) {
        ker.add(m.values().data() + static_cast<std::size_t>(i) * c, v.values().data(),
                out.data() + static_cast<std::size_t>(i) * c, static_cast<std::size_t>(c));
    }
    return make_op(m.shape(), std::move(out), {m, v}, [r, c](TensorNode& node) {
        auto& pm = *node.parents[0];
        auto& pv = *node.parents[1];
        if (pm.requires_grad) {
            pm.ensure_grad();
            kernels::active().axpy(1.0, node.grad.data(), pm.grad.data(), node.size());
        }
        if (pv.requires_grad) {
            pv.ensure_grad();
            for (int i = 0; i < r; ++i) {
                kernels::active().axpy(1.0, node.grad.data() + static_cast<std::size_t>(i) * c,
                                       pv.grad.data(), static_cast<std::size_t>(c));
            }
        }
    });
}

Tensor concat_cols(const Tensor& a, const Tensor& b) {
    int ra, ca, rb, cb;
    as_matrix(a, ra, ca);
    as_matrix(b, rb, cb);
    if (ra != rb) {
        throw DimError("concat_cols: row counts differ, " + shape_str(a.shape()) + " vs " +
                       shape_str(b.shape()));
    }
    const int c = ca + cb;
    std::vector<double> out(static_cast<std::size_t>(ra) * c);
    for (int i = 0; i < ra; ++i) {
        std::copy_n(a.values().data() + static_cast<std::size_t>(i) * ca, ca,
                    out.data() + static_cast<std::size_t>(i) * c);
        std::copy_n(b.values().data() + static_cast<std::size_t>(i) * cb, cb,
                    out.data() + static_cast<std::size_t>(i) * c + ca);
    }
    std::vector<int> shape = (a.ndim() == 1 && b.ndim() == 1) ? std::vector<int>{c}
                                                              : std::vector<int>{ra, c};
    return make_op(std::move(shape), std::move(out), {a, b}, [ra, ca, cb, c](TensorNode& node) {
        auto& pa = *node.parents[0];
        auto& pb = *node.parents[1];
        if (pa.requires_grad) pa.ensure_grad();
        if (pb.requires_grad) pb.ensure_grad();
        for (int i = 0; i < ra; ++i) {
            const double* g = node.grad.data() + static_cast<std::size_t>(i) * c;
            if (pa.requires_grad)
                kernels::active().axpy(1.0, g, pa.grad.data() + static_cast<std::size_t>(i) * ca,
                                       static_cast<std::size_t>(ca));
            if (pb.requires_grad)
                kernels::active().axpy(1.0, g + ca,
                                       pb.grad.data() + static_cast<std::size_t>(i) * cb,
                                       static_cast<std::size_t>(cb));
        }
    });
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw ContractError("concat_rows: empty part list");
    int c = -1;
    int total_rows = 0;
    for (const auto& p : parts) {
        int r, pc;
        as_matrix(p, r, pc);
        if (c == -1) c = pc;
        if (pc != c) {
            throw DimError("concat_rows: column counts differ, " + std::to_string(c) + " vs " +
                           shape_str(p.shape()));
        }
        total_rows += r;
    }
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(total_rows) * c);
    for (const auto& p : parts) {
        out.insert(out.end(), p.values().begin(), p.values().end());
    }
    std::vector<std::size_t> sizes;
    for (const auto& p : parts) sizes.push_back(p.size());
    return make_op({total_rows, c}, std::move(out), parts, [sizes](TensorNode& node) {
        std::size_t off = 0;
        for (std::size_t pi = 0; pi < node.parents.size(); ++pi) {
            auto& p = *node.parents[pi];
            if (p.requires_grad) {
                p.ensure_grad();
                kernels::active().axpy(1.0, node.grad.data() + off, p.grad.data(), sizes[pi]);
            }
            off += sizes[pi];
        }
    });
}

Tensor slice_rows(const Tensor& m, int begin, int end) {
    int r, c;
    as_matrix(m, r, c);
    if (begin < 0 || end > r || begin >= end) {
        throw DimError("slice_rows: invalid range [" + std::to_string(begin) + "," +
                       std::to_string(end) + ") on " + shape_str(m.shape()));
    }
    const int nr = end - begin;
    std::vector<double> out(m.values().begin() + static_cast<std::size_t>(begin) * c,
                            m.values().begin() + static_cast<std::size_t>(end) * c);
    return make_op({nr, c}, std::move(out), {m}, [begin, c](TensorNode& node) {
        auto& p = *node.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        kernels::active().axpy(1.0, node.grad.data(),
                               p.grad.data() + static_cast<std::size_t>(begin) * c, node.size());
    });
}

Tensor slice_cols(const Tensor& m, int begin, int end) {
    int r, c;
    as_matrix(m, r, c);
    if (begin < 0 || end > c || begin >= end) {
        throw DimError("slice_cols: invalid range [" + std::to_string(begin) + "," +
                       std::to_string(end) + ") on " + shape_str(m.shape()));
    }
    const int nc = end - begin;
    std::vector<double> out(static_cast<std::size_t>(r) * nc);
    for (int i = 0; i < r; ++i) {
        std::copy_n(m.values().data() + static_cast<std::size_t>(i) * c + begin, nc,
                    out.data() + static_cast<std::size_t>(i) * nc);
    }
    return make_op({r, nc}, std::move(out), {m}, [r, c, begin, nc](TensorNode& node) {
        auto& p = *node.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        for (int i = 0; i < r; ++i) {
            kernels::active().axpy(1.0, node.grad.data() + static_cast<std::size_t>(i) * nc,
                                   p.grad.data() + static_cast<std::size_t>(i) * c + begin,
                                   static_cast<std::size_t>(nc));
        }
    });
}

Tensor row(const Tensor& m, int r) {
    int rr, c;
    as_matrix(m, rr, c);
    if (r < 0 || r >= rr) {
        throw DimError("row: index " + std::to_string(r) + " out of range for " +
                       shape_str(m.shape()));
    }
    std::vector<double> out(m.values().begin() + static_cast<std::size_t>(r) * c,
                            m.values().begin() + static_cast<std::size_t>(r + 1) * c);
    return make_op({c}, std::move(out), {m}, [r, c](TensorNode& node) {
        auto& p = *node.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        kernels::active().axpy(1.0, node.grad.data(),
                               p.grad.data() + static_cast<std::size_t>(r) * c,
                               static_cast<std::size_t>(c));
    });
}

Tensor sum(const Tensor& a) {
    double s = kernels::active().sum(a.values().data(), a.size());
    return make_op({1}, {s}, {a}, [](TensorNode& node) {
        auto& p = *node.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        const double g = node.grad[0];
        for (std::size_t i = 0; i < p.values.size(); ++i) p.grad[i] += g;
    });
}

Tensor mean_rows(const Tensor& m) {
    int r, c;
    as_matrix(m, r, c);
    std::vector<double> out(static_cast<std::size_t>(c), 0.0);
    const auto& ker = kernels::active();
    for (int i = 0; i < r; ++i) {
        ker.axpy(1.0 / r, m.values().data() + static_cast<std::size_t>(i) * c, out.data(),
                 static_cast<std::size_t>(c));
    }
    return make_op({1, c}, std::move(out), {m}, [r, c](TensorNode& node) {
        auto& p = *node.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        for (int i = 0; i < r; ++i) {
            kernels::active().axpy(1.0 / r, node.grad.data(),
                                   p.grad.data() + static_cast<std::size_t>(i) * c,
                                   static_cast<std::size_t>(c));
        }
    });
}

Tensor gelu(const Tensor& a) {
    std::vector<double> out(a.size());
    const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double x = a[i];
        out[i] = 0.5 * x * (1.0 + std::erf(x * inv_sqrt2));
    }
    return make_op(a.shape(), std::move(out), {a}, [inv_sqrt2](TensorNode& node) {
        auto& p = *node.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        const double inv_sqrt2pi = 1.0 / std::sqrt(2.0 * M_PI);
        for (std::size_t i = 0; i < node.size(); ++i) {
            const double x = p.values[i];
            const double cdf = 0.5 * (1.0 + std::erf(x * inv_sqrt2));
            const double pdf = inv_sqrt2pi * std::exp(-0.5 * x * x);
            p.grad[i] += node.grad[i] * (cdf + x * pdf);
        }
    });
}

Tensor dropout(const Tensor& a, double rate, Rng& rng, bool training) {
    if (rate < 0.0 || rate >= 1.0) throw ContractError("dropout: rate must be in [0,1)");
    if (!training || rate == 0.0) return a;
    const double keep = 1.0 - rate;
    auto mask = std::make_shared<std::vector<double>>(a.size());
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        (*mask)[i] = rng.uniform01() < rate ? 0.0 : 1.0 / keep;
        out[i] = a[i] * (*mask)[i];
    }
    return make_op(a.shape(), std::move(out), {a}, [mask](TensorNode& node) {
        auto& p = *node.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        for (std::size_t i = 0; i < node.size(); ++i) p.grad[i] += node.grad[i] * (*mask)[i];
    });
}

Tensor softmax_lastdim(const Tensor& a, bool* all_masked_flag) {
    const auto& shape = a.shape();
    const int c = shape.back();
    if (c < 1) throw DimError("softmax: empty last dimension " + shape_str(shape));
    const std::size_t nrows = a.size() / static_cast<std::size_t>(c);
    std::vector<double> out(a.size());
    const auto& ker = kernels::active();
    for (std::size_t rI = 0; rI < nrows; ++rI) {
        const double* x = a.values().data() + rI * c;
        double* y = out.data() + rI * c;
        double mx = -kInf;
        for (int j = 0; j < c; ++j) {
            if (std::isnan(x[j])) throw NumericError("softmax: NaN input");
            mx = std::max(mx, x[j]);
        }
        if (mx == -kInf) {
            // fully masked row: all-zero output, never NaN
            std::fill(y, y + c, 0.0);
            if (all_masked_flag) *all_masked_flag = true;
            continue;
        }
        for (int j = 0; j < c; ++j) y[j] = std::exp(x[j] - mx);
        const double z = ker.sum(y, static_cast<std::size_t>(c));
        ker.scale(y, 1.0 / z, y, static_cast<std::size_t>(c));
    }
    return make_op(shape, std::move(out), {a}, [c](TensorNode& node) {
        auto& p = *node.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        const std::size_t nrows = node.size() / static_cast<std::size_t>(c);
        for (std::size_t rI = 0; rI < nrows; ++rI) {
            const double* y = node.values.data() + rI * c;
            const double* g = node.grad.data() + rI * c;
            double dotv = kernels::active().dot(y, g, static_cast<std::size_t>(c));
            double* px = p.grad.data() + rI * c;
            for (int j = 0; j < c; ++j) px[j] += y[j] * (g[j] - dotv);
        }
    });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
    const auto& shape = x.shape();
    if (shape.empty() || shape.back() < 1) {
        throw DimError("layer_norm: empty last dimension " + shape_str(shape));
    }
    if (eps <= 0.0) throw ContractError("layer_norm: eps must be positive");
    const int c = shape.back();
    if (static_cast<int>(gain.size()) != c || static_cast<int>(bias.size()) != c) {
        throw DimError("layer_norm: gain/bias length must equal last dim " + std::to_string(c));
    }
    const std::size_t nrows = x.size() / static_cast<std::size_t>(c);
    std::vector<double> out(x.size());
    auto mu = std::make_shared<std::vector<double>>(nrows);
    auto inv_sigma = std::make_shared<std::vector<double>>(nrows);
    const auto& ker = kernels::active();
    for (std::size_t rI = 0; rI < nrows; ++rI) {
        const double* xr = x.values().data() + rI * c;
        double m = ker.sum(xr, static_cast<std::size_t>(c)) / c;
        double var = 0.0;
        for (int j = 0; j < c; ++j) var += (xr[j] - m) * (xr[j] - m);
        var /= c;
        (*mu)[rI] = m;
        (*inv_sigma)[rI] = 1.0 / std::sqrt(var + eps);
        double* yr = out.data() + rI * c;
        for (int j = 0; j < c; ++j) {
            yr[j] = gain[static_cast<std::size_t>(j)] * (xr[j] - m) * (*inv_sigma)[rI] +
                    bias[static_cast<std::size_t>(j)];
        }
    }
    return make_op(shape, std::move(out), {x, gain, bias},
                   [c, mu, inv_sigma](TensorNode& node) {
        auto& px = *node.parents[0];
        auto& pg = *node.parents[1];
        auto& pb = *node.parents[2];
        const std::size_t nrows = node.size() / static_cast<std::size_t>(c);
        if (px.requires_grad) px.ensure_grad();
        if (pg.requires_grad) pg.ensure_grad();
        if (pb.requires_grad) pb.ensure_grad();
        for (std::size_t rI = 0; rI < nrows; ++rI) {
            const double* xr = px.values.data() + rI * c;
            const double* g = node.grad.data() + rI * c;
            const double is = (*inv_sigma)[rI];
            const double m = (*mu)[rI];
            // dxhat, then the two mean corrections
            double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
            for (int j = 0; j < c; ++j) {
                const double xhat = (xr[j] - m) * is;
                const double dxhat = g[j] * pg.values[static_cast<std::size_t>(j)];
                sum_dxhat += dxhat;
                sum_dxhat_xhat += dxhat * xhat;
                if (pg.requires_grad) pg.grad[static_cast<std::size_t>(j)] += g[j] * xhat;
                if (pb.requires_grad) pb.grad[static_cast<std::size_t>(j)] += g[j];
            }
            if (px.requires_grad) {
                double* dx = px.grad.data() + rI * c;
                for (int j = 0; j < c; ++j) {
                    const double xhat = (xr[j] - m) * is;
                    const double dxhat = g[j] * pg.values[static_cast<std::size_t>(j)];
                    dx[j] += is * (dxhat - sum_dxhat / c - xhat * sum_dxhat_xhat / c);
                }
            }
        }
    });
}

Tensor cosine_similarity(const Tensor& u, const Tensor& v) {
    if (u.size() != v.size()) {
        throw DimError("cosine_similarity: length mismatch " + shape_str(u.shape()) + " vs " +
                       shape_str(v.shape()));
    }
    const auto& ker = kernels::active();
    const std::size_t n = u.size();
    const double d = ker.dot(u.values().data(), v.values().data(), n);
    const double nu = std::sqrt(ker.dot(u.values().data(), u.values().data(), n));
    const double nv = std::sqrt(ker.dot(v.values().data(), v.values().data(), n));
    constexpr double kEps = 1e-8;
    const double denom = std::max(nu * nv, kEps);
    const double c = std::clamp(d / denom, -1.0, 1.0);
    const bool clamped_denom = nu * nv < kEps;
    return make_op({1}, {c}, {u, v}, [d, nu, nv, denom, c, clamped_denom](TensorNode& node) {
        auto& pu = *node.parents[0];
        auto& pv = *node.parents[1];
        const double g = node.grad[0];
        const std::size_t n = pu.values.size();
        if (pu.requires_grad) {
            pu.ensure_grad();
            for (std::size_t i = 0; i < n; ++i) {
                double dc = clamped_denom ? pv.values[i] / denom
                                          : pv.values[i] / denom - c * pu.values[i] / (nu * nu);
                pu.grad[i] += g * dc;
            }
        }
        if (pv.requires_grad) {
            pv.ensure_grad();
            for (std::size_t i = 0; i < n; ++i) {
                double dc = clamped_denom ? pu.values[i] / denom
                                          : pu.values[i] / denom - c * pv.values[i] / (nv * nv);
                pv.grad[i] += g * dc;
            }
        }
        (void)d;
    });
}

Tensor cross_entropy(const Tensor& logits, int target_class) {
    const int c = static_cast<int>(logits.size());
    if (c < 2) throw DimError("cross_entropy: need at least 2 classes, got " + std::to_string(c));
    if (target_class < 0 || target_class >= c) {
        throw LabelError("cross_entropy: target class " + std::to_string(target_class) +
                         " out of [0," + std::to_string(c) + ")");
    }
    const double* x = logits.values().data();
    double mx = x[0];
    for (int j = 1; j < c; ++j) mx = std::max(mx, x[j]);
    double z = 0.0;
    for (int j = 0; j < c; ++j) z += std::exp(x[j] - mx);
    const double lse = mx + std::log(z);
    const double loss = lse - x[target_class];
    return make_op({1}, {loss}, {logits}, [c, target_class, mx, z](TensorNode& node) {
        auto& p = *node.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        const double g = node.grad[0];
        for (int j = 0; j < c; ++j) {
            const double sm = std::exp(p.values[static_cast<std::size_t>(j)] - mx) / z;
            p.grad[static_cast<std::size_t>(j)] += g * (sm - (j == target_class ? 1.0 : 0.0));
        }
    });
}

Tensor mse(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "mse");
    const std::size_t n = a.size();
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    const double loss = s / static_cast<double>(n);
    return make_op({1}, {loss}, {a, b}, [n](TensorNode& node) {
        auto& pa = *node.parents[0];
        auto& pb = *node.parents[1];
        const double g = node.grad[0] * 2.0 / static_cast<double>(n);
        if (pa.requires_grad) {
            pa.ensure_grad();
            for (std::size_t i = 0; i < n; ++i) pa.grad[i] += g * (pa.values[i] - pb.values[i]);
        }
        if (pb.requires_grad) {
            pb.ensure_grad();
            for (std::size_t i = 0; i < n; ++i) pb.grad[i] -= g * (pa.values[i] - pb.values[i]);
        }
    });
}

void backward(const Tensor& loss) {
    if (!loss.defined()) throw ContractError("backward: undefined tensor");
    if (loss.size() != 1) {
        throw ContractError("backward: loss must be scalar, got shape " + shape_str(loss.shape()));
    }
    TensorNode* root = &loss.node();
    if (!root->requires_grad) return;

    // Iterative DFS postorder; reversed it is a topological order, so each
    // recorded operation is replayed exactly once.
    std::vector<TensorNode*> order;
    std::unordered_set<TensorNode*> visited;
    std::vector<std::pair<TensorNode*, std::size_t>> stack;
    stack.emplace_back(root, 0);
    visited.insert(root);
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            TensorNode* p = node->parents[next++].get();
            if (p->requires_grad && !visited.count(p)) {
                visited.insert(p);
                stack.emplace_back(p, 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    root->ensure_grad();
    root->grad[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        TensorNode* node = *it;
        if (!node->is_leaf && node->backprop) {
            node->ensure_grad();
            node->backprop(*node);
        }
    }
}

}  // namespace dipro
