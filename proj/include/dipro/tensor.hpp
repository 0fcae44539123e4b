#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "dipro/rng.hpp"

namespace dipro {

// Dense 64-bit float tensor participating in a reverse-mode differentiation
// graph. Row-major flat storage, explicit shape, copies over views. The graph
// is the implicit DAG of nodes: each non-leaf remembers its parents and an
// adjoint step; backward() replays the recorded steps in reverse topological
// order, visiting every operation exactly once.
struct TensorNode {
    std::vector<int> shape;
    std::vector<double> values;
    std::vector<double> grad;  // same length as values once touched
    bool requires_grad = false;
    bool is_leaf = true;
    std::uint64_t id = 0;  // creation index; fixes replay order ties
    std::vector<std::shared_ptr<TensorNode>> parents;
    std::function<void(TensorNode&)> backprop;  // scatters node.grad into parents

    std::size_t size() const { return values.size(); }
    void ensure_grad() {
        if (grad.size() != values.size()) grad.assign(values.size(), 0.0);
    }
};

class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::shared_ptr<TensorNode> node) : node_(std::move(node)) {}

    static Tensor zeros(std::vector<int> shape, bool requires_grad = false);
    static Tensor full(std::vector<int> shape, double value, bool requires_grad = false);
    static Tensor from(std::vector<int> shape, std::vector<double> values,
                       bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false);
    // Uniform in [-limit, limit]; used for parameter init.
    static Tensor uniform(std::vector<int> shape, double limit, Rng& rng,
                          bool requires_grad = false);

    bool defined() const { return node_ != nullptr; }
    const std::vector<int>& shape() const { return node_->shape; }
    std::size_t size() const { return node_->size(); }
    int dim(int i) const { return node_->shape[static_cast<std::size_t>(i)]; }
    int ndim() const { return static_cast<int>(node_->shape.size()); }
    // 2-D helpers; a 1-D tensor reads as a single row.
    int rows() const;
    int cols() const;

    std::span<const double> values() const { return node_->values; }
    // Direct mutation for optimizer updates and tests; bypasses the graph.
    std::span<double> values_mut() { return node_->values; }
    std::span<const double> grad() const;
    bool requires_grad() const { return node_->requires_grad; }
    void zero_grad();

    double item() const;                    // scalar tensors only
    double at(int r, int c) const;          // 2-D access
    double operator[](std::size_t i) const { return node_->values[i]; }

    TensorNode& node() const { return *node_; }
    const std::shared_ptr<TensorNode>& ptr() const { return node_; }

private:
    std::shared_ptr<TensorNode> node_;
};

std::string shape_str(const std::vector<int>& shape);

// ---- graph ops ----

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
// [r x c] plus a length-c vector broadcast over rows.
Tensor add_rowvec(const Tensor& m, const Tensor& v);
Tensor concat_cols(const Tensor& a, const Tensor& b);
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor slice_rows(const Tensor& m, int begin, int end);
Tensor slice_cols(const Tensor& m, int begin, int end);
Tensor row(const Tensor& m, int r);  // 1-D extract
Tensor sum(const Tensor& a);         // scalar
Tensor mean_rows(const Tensor& m);   // [r x c] -> [1 x c]
Tensor gelu(const Tensor& a);
Tensor dropout(const Tensor& a, double rate, Rng& rng, bool training);

// Softmax over the last dimension with max-subtraction. -inf entries map to
// exactly 0. A row of all -inf becomes all zeros and sets *all_masked_flag
// (never NaN). NaN input raises NumericError.
Tensor softmax_lastdim(const Tensor& a, bool* all_masked_flag = nullptr);

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps = 1e-5);
Tensor cosine_similarity(const Tensor& u, const Tensor& v);  // scalar in [-1,1]
Tensor cross_entropy(const Tensor& logits, int target_class);  // scalar
Tensor mse(const Tensor& a, const Tensor& b);                  // scalar

// Populate gradients of everything the scalar loss depends on. Repeated calls
// accumulate into leaf gradients (gradient accumulation).
void backward(const Tensor& loss);

}  // namespace dipro
