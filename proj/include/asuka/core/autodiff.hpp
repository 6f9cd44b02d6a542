#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "asuka/core/tensor.hpp"

namespace asuka::core {

// Reverse-mode autodiff over dense f64 tensors. Graphs are built eagerly per
// forward pass; parameters are long-lived nodes shared across graphs.
// Single-threaded and free of nondeterministic reductions, so repeated runs
// are bit-identical.

struct Node;
using Var = std::shared_ptr<Node>;

struct Node {
    Tensor value;
    Tensor grad;  // allocated on demand, same shape as value
    bool requires_grad = false;
    std::vector<Var> parents;
    std::function<void(Node&)> backward_fn;

    void ensure_grad() {
        if (grad.data.size() != value.data.size()) {
            grad = Tensor(value.shape);
        }
    }
    void zero_grad() {
        if (!grad.data.empty()) grad.fill(0.0);
    }
};

Var constant(Tensor v);
Var make_param(Tensor v);

// Elementwise / broadcast
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var add_rowvec(const Var& a, const Var& v);   // a:[N,M] + v:[M] per row
Var add_const(const Var& a, const Tensor& c); // broadcast-free constant add
Var mul_const(const Var& a, const Tensor& m); // elementwise constant mask
Var sigmoid(const Var& a);
Var silu(const Var& a);

// Linear algebra (2-D)
Var matmul(const Var& a, const Var& b, bool ta = false, bool tb = false);

// Rows = tokens, cols = features
Var softmax_rows(const Var& a);
Var layernorm_rows(const Var& x, const Var& gamma, const Var& beta, double eps = 1e-6);
Var slice_rows(const Var& a, std::int64_t r0, std::int64_t r1);
Var slice_cols(const Var& a, std::int64_t c0, std::int64_t c1);
Var concat_rows(const std::vector<Var>& parts);
Var concat_cols(const std::vector<Var>& parts);
Var reshape(const Var& a, std::vector<std::int64_t> shape);

// [C,H,W] <-> [H*W, C] bridges between conv features and token streams
Var chw_to_tokens(const Var& x);
Var tokens_to_chw(const Var& t, std::int64_t C, std::int64_t H, std::int64_t W);

// Reductions / losses (all return shape {1})
Var sum(const Var& a);
Var mean(const Var& a);
Var mse_loss(const Var& a, const Tensor& target);
Var l1_loss(const Var& a, const Tensor& target);
// Weighted means: sum(w * f(a - t)) / max(sum(w), eps)
Var mse_loss_weighted(const Var& a, const Tensor& target, const Tensor& weight);
Var l1_loss_weighted(const Var& a, const Tensor& target, const Tensor& weight);

// Conv stack, single-sample CHW layout
Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad);
Var upsample_nearest2x(const Var& x);
Var concat_channels(const Var& a, const Var& b);

void backward(const Var& loss);

// Ordered named parameter registry shared by models and the optimizer.
class ParamStore {
public:
    Var add(const std::string& name, Tensor init);
    const Var& get(const std::string& name) const;
    bool has(const std::string& name) const;
    void zero_grad();
    std::int64_t param_count() const;
    void set_trainable(bool trainable);
    const std::vector<std::pair<std::string, Var>>& items() const { return items_; }
    std::vector<std::pair<std::string, Var>>& items() { return items_; }

private:
    std::vector<std::pair<std::string, Var>> items_;
};

// Nodes are shared; trainability can be toggled through a const store.
inline void set_store_trainable(const ParamStore& store, bool trainable) {
    for (const auto& [name, v] : store.items()) v->requires_grad = trainable;
}

}  // namespace asuka::core
