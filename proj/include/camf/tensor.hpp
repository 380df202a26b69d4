#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

namespace camf {

class Tensor;

namespace detail {

struct TensorNode {
    std::vector<size_t> shape;
    std::vector<double> data;   // row-major
    std::vector<double> grad;   // empty until a backward pass touches this node
    bool requires_grad = false;
    bool backward_done = false;
    std::vector<std::shared_ptr<TensorNode>> parents;
    // Accumulates this node's grad into the parents' grads. `self` is the node
    // the closure is stored on; passing it avoids a self-referential capture.
    std::function<void(TensorNode& self)> backprop;

    size_t numel() const { return data.size(); }
};

// When a NoGradScope is alive on this thread, ops do not record the graph.
struct NoGradScope {
    NoGradScope();
    ~NoGradScope();
    NoGradScope(const NoGradScope&) = delete;
    NoGradScope& operator=(const NoGradScope&) = delete;
};

bool grad_enabled();

}  // namespace detail

using NoGradScope = detail::NoGradScope;

// Dense tensor of doubles (rank 1 or 2 in practice) participating in a
// dynamically recorded computation graph. Tensors are immutable values; ops
// return fresh tensors. Construction from external data rejects NaN/Inf.
class Tensor {
public:
    Tensor() = default;

    Tensor(std::vector<size_t> shape, std::vector<double> data, bool requires_grad = false);

    static Tensor scalar(double v, bool requires_grad = false);
    static Tensor zeros(std::vector<size_t> shape, bool requires_grad = false);
    static Tensor full(std::vector<size_t> shape, double v, bool requires_grad = false);

    bool defined() const { return node_ != nullptr; }
    const std::vector<size_t>& shape() const;
    size_t rank() const { return shape().size(); }
    size_t size() const;                      // number of elements
    size_t rows() const;                      // rank-2 only
    size_t cols() const;                      // rank-2 only
    const std::vector<double>& data() const;
    double value() const;                     // scalar tensors
    double at(size_t i) const;                // rank-1
    double at(size_t i, size_t j) const;      // rank-2

    bool requires_grad() const;

    // Gradient accumulated by the most recent backward() whose graph contains
    // this leaf; exact zeros if no backward has touched it. Throws unless
    // requires_grad.
    Tensor grad() const;

    // Value copy cut loose from any recorded graph.
    Tensor detach(bool requires_grad = false) const;

    std::string shape_str() const;

private:
    std::shared_ptr<detail::TensorNode> node_;

    explicit Tensor(std::shared_ptr<detail::TensorNode> n) : node_(std::move(n)) {}

    friend struct TensorOps;
};

// ---- primitive operations (all record gradients unless NoGradScope) ----

Tensor add(const Tensor& a, const Tensor& b);        // same shape
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);        // elementwise
Tensor scale(const Tensor& a, double c);
Tensor neg(const Tensor& a);

Tensor matmul(const Tensor& a, const Tensor& b);     // [M,K]x[K,N] -> [M,N]
Tensor matmul_nt(const Tensor& a, const Tensor& b);  // [M,K]x[N,K]^T -> [M,N]

Tensor relu(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor tanh(const Tensor& a);

// Softmax along the last axis, computed with max-subtraction. Rank 1 or 2.
Tensor softmax(const Tensor& a);

// log(max(x, floor)); gradient is 1/x above the floor and 0 at or below it.
Tensor log_clamped(const Tensor& a, double floor = 1e-12);

Tensor sum(const Tensor& a);                         // -> scalar
Tensor mean_all(const Tensor& a);                    // -> scalar

// Per-column reductions over the row axis of an SxD tensor.
Tensor mean_rows(const Tensor& a);                   // -> [D]
Tensor std_rows(const Tensor& a);                    // population std -> [D]
std::pair<Tensor, Tensor> reduce_mean_std(const Tensor& a);

// Affine map x*W + b; x rank 1 ([I]) or 2 ([T,I]), W [I,O], b [O].
Tensor dense(const Tensor& x, const Tensor& W, const Tensor& b);

// Kernel-size-1 convolution over time: the same affine map at every timestep.
// Identical to dense by construction.
Tensor conv1d_k1(const Tensor& x, const Tensor& W, const Tensor& b);

// Full-sequence LSTM. x [T,I]; W [I,4U]; U_rec [U,4U]; b [4U]; h0, c0 [U].
// Gate layout along the 4U axis: input, forget, candidate, output.
// Returns the hidden-state sequence [T,U].
Tensor lstm_seq(const Tensor& x, const Tensor& W, const Tensor& U_rec,
                const Tensor& b, const Tensor& h0, const Tensor& c0);

Tensor reshape(const Tensor& a, std::vector<size_t> shape);
Tensor slice_rows(const Tensor& a, size_t r0, size_t r1);
Tensor slice_cols(const Tensor& a, size_t c0, size_t c1);
Tensor concat_rows(const std::vector<Tensor>& parts);  // rank-2 pieces
Tensor concat_cols(const std::vector<Tensor>& parts);  // rank-2 pieces
Tensor concat_vec(const std::vector<Tensor>& parts);   // rank-1 pieces
Tensor stack_rows(const std::vector<Tensor>& rows);    // rank-1 pieces -> [S,D]

// probs [B,K], labels in [0,K) -> [B] with element b = probs[b, labels[b]].
Tensor pick_per_row(const Tensor& probs, const std::vector<int>& labels);

// Leaf construction without the finite-value check; for internal numeric
// pipelines (optimizer updates) where divergence is detected downstream.
Tensor tensor_unchecked(std::vector<size_t> shape, std::vector<double> data,
                        bool requires_grad = false);

// Reverse-mode sweep from a scalar loss. Fills gradients of every
// requires_grad leaf in the loss's graph (resetting them first). A second
// call on the same loss tensor is rejected.
void backward(const Tensor& loss);

// Central-difference gradient oracle: (f(x+h*e_i) - f(x-h*e_i)) / 2h per
// element. Evaluates f forward-only; independent of the reverse-mode path.
Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f,
                        const Tensor& x, double h = 1e-5);

}  // namespace camf
