#include "camf/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace camf {

namespace detail {

namespace {
thread_local int nograd_depth = 0;
}

NoGradScope::NoGradScope() { ++nograd_depth; }
NoGradScope::~NoGradScope() { --nograd_depth; }
bool grad_enabled() { return nograd_depth == 0; }

}  // namespace detail

using detail::TensorNode;

namespace {

std::string shape_to_str(const std::vector<size_t>& s) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << "]";
    return os.str();
}

size_t shape_numel(const std::vector<size_t>& s) {
    size_t n = 1;
    for (size_t d : s) n *= d;
    return n;
}

[[noreturn]] void dim_error(const std::string& op, const std::vector<size_t>& a,
                            const std::vector<size_t>& b) {
    throw std::invalid_argument(op + ": shape mismatch (" + shape_to_str(a) + " vs " +
                                shape_to_str(b) + ")");
}

// C[M,N] += A[M,K] * B[K,N]
void mm_nn_acc(const double* A, const double* B, double* C, size_t M, size_t K, size_t N) {
    for (size_t i = 0; i < M; ++i) {
        const double* Ar = A + i * K;
        double* Cr = C + i * N;
        for (size_t k = 0; k < K; ++k) {
            const double a = Ar[k];
            const double* Br = B + k * N;
            for (size_t j = 0; j < N; ++j) Cr[j] += a * Br[j];
        }
    }
}

// C[M,N] += A[M,K] * B[N,K]^T
void mm_nt_acc(const double* A, const double* B, double* C, size_t M, size_t K, size_t N) {
    for (size_t i = 0; i < M; ++i) {
        const double* Ar = A + i * K;
        double* Cr = C + i * N;
        for (size_t j = 0; j < N; ++j) {
            const double* Br = B + j * K;
            double acc = 0.0;
            for (size_t k = 0; k < K; ++k) acc += Ar[k] * Br[k];
            Cr[j] += acc;
        }
    }
}

// C[K,N] += A[M,K]^T * B[M,N]
void mm_tn_acc(const double* A, const double* B, double* C, size_t M, size_t K, size_t N) {
    for (size_t i = 0; i < M; ++i) {
        const double* Ar = A + i * K;
        const double* Br = B + i * N;
        for (size_t k = 0; k < K; ++k) {
            const double a = Ar[k];
            if (a == 0.0) continue;
            double* Cr = C + k * N;
            for (size_t j = 0; j < N; ++j) Cr[j] += a * Br[j];
        }
    }
}

}  // namespace

// Friend with access to Tensor internals; all ops construct results through it.
struct TensorOps {
    static const std::shared_ptr<TensorNode>& node(const Tensor& t) {
        if (!t.node_) throw std::invalid_argument("tensor: undefined (default-constructed)");
        return t.node_;
    }

    static Tensor wrap(std::shared_ptr<TensorNode> n) { return Tensor(std::move(n)); }

    static Tensor make(std::vector<size_t> shape, std::vector<double> data,
                       const std::vector<Tensor>& parents,
                       std::function<void(TensorNode&)> backprop) {
        auto n = std::make_shared<TensorNode>();
        n->shape = std::move(shape);
        n->data = std::move(data);
        bool needs = false;
        if (detail::grad_enabled()) {
            for (const auto& p : parents) needs = needs || node(p)->requires_grad;
        }
        if (needs) {
            n->requires_grad = true;
            n->parents.reserve(parents.size());
            for (const auto& p : parents) n->parents.push_back(node(p));
            n->backprop = std::move(backprop);
        }
        return wrap(std::move(n));
    }
};

namespace {

const std::shared_ptr<TensorNode>& nd(const Tensor& t) { return TensorOps::node(t); }

void accumulate(TensorNode& parent, const std::vector<double>& g) {
    if (!parent.requires_grad) return;
    for (size_t i = 0; i < g.size(); ++i) parent.grad[i] += g[i];
}

void require_rank2(const Tensor& t, const char* op) {
    if (t.rank() != 2)
        throw std::invalid_argument(std::string(op) + ": expected rank-2 tensor, got " +
                                    t.shape_str());
}

}  // namespace

// ---- Tensor ----

Tensor::Tensor(std::vector<size_t> shape, std::vector<double> data, bool requires_grad) {
    if (shape.empty()) throw std::invalid_argument("tensor: shape must be non-empty");
    for (size_t d : shape) {
        if (d == 0) throw std::invalid_argument("tensor: zero extent in shape " + shape_to_str(shape));
    }
    if (shape_numel(shape) != data.size()) {
        throw std::invalid_argument("tensor: shape " + shape_to_str(shape) + " wants " +
                                    std::to_string(shape_numel(shape)) + " values, got " +
                                    std::to_string(data.size()));
    }
    for (double v : data) {
        if (!std::isfinite(v)) throw std::invalid_argument("tensor: non-finite value in input data");
    }
    node_ = std::make_shared<TensorNode>();
    node_->shape = std::move(shape);
    node_->data = std::move(data);
    node_->requires_grad = requires_grad;
}

Tensor Tensor::scalar(double v, bool requires_grad) {
    return Tensor({1}, {v}, requires_grad);
}

Tensor Tensor::zeros(std::vector<size_t> shape, bool requires_grad) {
    return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(std::vector<size_t> shape, double v, bool requires_grad) {
    size_t n = shape_numel(shape);
    return Tensor(std::move(shape), std::vector<double>(n, v), requires_grad);
}

const std::vector<size_t>& Tensor::shape() const { return nd(*this)->shape; }
size_t Tensor::size() const { return nd(*this)->data.size(); }

size_t Tensor::rows() const {
    require_rank2(*this, "rows");
    return shape()[0];
}

size_t Tensor::cols() const {
    require_rank2(*this, "cols");
    return shape()[1];
}

const std::vector<double>& Tensor::data() const { return nd(*this)->data; }

double Tensor::value() const {
    if (size() != 1) throw std::invalid_argument("value: tensor is not scalar, shape " + shape_str());
    return nd(*this)->data[0];
}

double Tensor::at(size_t i) const {
    if (rank() != 1) throw std::invalid_argument("at(i): tensor is not rank-1, shape " + shape_str());
    return nd(*this)->data.at(i);
}

double Tensor::at(size_t i, size_t j) const {
    require_rank2(*this, "at");
    return nd(*this)->data.at(i * cols() + j);
}

bool Tensor::requires_grad() const { return nd(*this)->requires_grad; }

Tensor Tensor::grad() const {
    const auto& n = nd(*this);
    if (!n->requires_grad)
        throw std::runtime_error("grad: tensor does not require gradients");
    if (n->grad.empty()) return Tensor(n->shape, std::vector<double>(n->data.size(), 0.0));
    return Tensor(n->shape, n->grad);
}

Tensor Tensor::detach(bool requires_grad) const {
    auto n = std::make_shared<TensorNode>();
    n->shape = nd(*this)->shape;
    n->data = nd(*this)->data;
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
}

std::string Tensor::shape_str() const { return shape_to_str(shape()); }

// ---- elementwise ----

namespace {

void check_same_shape(const char* op, const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) dim_error(op, a.shape(), b.shape());
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    check_same_shape("add", a, b);
    std::vector<double> out(a.size());
    const auto& ad = a.data();
    const auto& bd = b.data();
    for (size_t i = 0; i < out.size(); ++i) out[i] = ad[i] + bd[i];
    return TensorOps::make(a.shape(), std::move(out), {a, b}, [](TensorNode& self) {
        accumulate(*self.parents[0], self.grad);
        accumulate(*self.parents[1], self.grad);
    });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    check_same_shape("sub", a, b);
    std::vector<double> out(a.size());
    const auto& ad = a.data();
    const auto& bd = b.data();
    for (size_t i = 0; i < out.size(); ++i) out[i] = ad[i] - bd[i];
    return TensorOps::make(a.shape(), std::move(out), {a, b}, [](TensorNode& self) {
        accumulate(*self.parents[0], self.grad);
        auto& p = *self.parents[1];
        if (p.requires_grad)
            for (size_t i = 0; i < self.grad.size(); ++i) p.grad[i] -= self.grad[i];
    });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    check_same_shape("mul", a, b);
    std::vector<double> out(a.size());
    const auto& ad = a.data();
    const auto& bd = b.data();
    for (size_t i = 0; i < out.size(); ++i) out[i] = ad[i] * bd[i];
    return TensorOps::make(a.shape(), std::move(out), {a, b}, [](TensorNode& self) {
        auto& pa = *self.parents[0];
        auto& pb = *self.parents[1];
        if (pa.requires_grad)
            for (size_t i = 0; i < self.grad.size(); ++i) pa.grad[i] += self.grad[i] * pb.data[i];
        if (pb.requires_grad)
            for (size_t i = 0; i < self.grad.size(); ++i) pb.grad[i] += self.grad[i] * pa.data[i];
    });
}

Tensor scale(const Tensor& a, double c) {
    std::vector<double> out(a.size());
    const auto& ad = a.data();
    for (size_t i = 0; i < out.size(); ++i) out[i] = c * ad[i];
    return TensorOps::make(a.shape(), std::move(out), {a}, [c](TensorNode& self) {
        auto& p = *self.parents[0];
        if (p.requires_grad)
            for (size_t i = 0; i < self.grad.size(); ++i) p.grad[i] += c * self.grad[i];
    });
}

Tensor neg(const Tensor& a) { return scale(a, -1.0); }

// ---- matrix products ----

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_rank2(a, "matmul");
    require_rank2(b, "matmul");
    if (a.cols() != b.rows()) dim_error("matmul", a.shape(), b.shape());
    const size_t M = a.rows(), K = a.cols(), N = b.cols();
    std::vector<double> out(M * N, 0.0);
    mm_nn_acc(a.data().data(), b.data().data(), out.data(), M, K, N);
    return TensorOps::make({M, N}, std::move(out), {a, b}, [M, K, N](TensorNode& self) {
        auto& pa = *self.parents[0];
        auto& pb = *self.parents[1];
        // dA = g * B^T ; dB = A^T * g
        if (pa.requires_grad) mm_nt_acc(self.grad.data(), pb.data.data(), pa.grad.data(), M, N, K);
        if (pb.requires_grad) mm_tn_acc(pa.data.data(), self.grad.data(), pb.grad.data(), M, K, N);
    });
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
    require_rank2(a, "matmul_nt");
    require_rank2(b, "matmul_nt");
    if (a.cols() != b.cols()) dim_error("matmul_nt", a.shape(), b.shape());
    const size_t M = a.rows(), K = a.cols(), N = b.rows();
    std::vector<double> out(M * N, 0.0);
    mm_nt_acc(a.data().data(), b.data().data(), out.data(), M, K, N);
    return TensorOps::make({M, N}, std::move(out), {a, b}, [M, K, N](TensorNode& self) {
        auto& pa = *self.parents[0];
        auto& pb = *self.parents[1];
        // S = A * B^T : dA = g * B ; dB = g^T * A
        if (pa.requires_grad) mm_nn_acc(self.grad.data(), pb.data.data(), pa.grad.data(), M, N, K);
        if (pb.requires_grad) mm_tn_acc(self.grad.data(), pa.data.data(), pb.grad.data(), M, N, K);
    });
}

// ---- activations ----

Tensor relu(const Tensor& a) {
    std::vector<double> out(a.size());
    const auto& ad = a.data();
    for (size_t i = 0; i < out.size(); ++i) out[i] = ad[i] > 0.0 ? ad[i] : 0.0;
    return TensorOps::make(a.shape(), std::move(out), {a}, [](TensorNode& self) {
        auto& p = *self.parents[0];
        if (!p.requires_grad) return;
        for (size_t i = 0; i < self.grad.size(); ++i)
            if (p.data[i] > 0.0) p.grad[i] += self.grad[i];
    });
}

Tensor sigmoid(const Tensor& a) {
    std::vector<double> out(a.size());
    const auto& ad = a.data();
    for (size_t i = 0; i < out.size(); ++i) out[i] = 1.0 / (1.0 + std::exp(-ad[i]));
    return TensorOps::make(a.shape(), std::move(out), {a}, [](TensorNode& self) {
        auto& p = *self.parents[0];
        if (!p.requires_grad) return;
        for (size_t i = 0; i < self.grad.size(); ++i) {
            const double y = self.data[i];
            p.grad[i] += self.grad[i] * y * (1.0 - y);
        }
    });
}

Tensor tanh(const Tensor& a) {
    std::vector<double> out(a.size());
    const auto& ad = a.data();
    for (size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(ad[i]);
    return TensorOps::make(a.shape(), std::move(out), {a}, [](TensorNode& self) {
        auto& p = *self.parents[0];
        if (!p.requires_grad) return;
        for (size_t i = 0; i < self.grad.size(); ++i) {
            const double y = self.data[i];
            p.grad[i] += self.grad[i] * (1.0 - y * y);
        }
    });
}

Tensor softmax(const Tensor& a) {
    if (a.rank() != 1 && a.rank() != 2)
        throw std::invalid_argument("softmax: expected rank 1 or 2, got " + a.shape_str());
    const size_t R = a.rank() == 2 ? a.shape()[0] : 1;
    const size_t C = a.rank() == 2 ? a.shape()[1] : a.shape()[0];
    std::vector<double> out(a.size());
    const auto& ad = a.data();
    for (size_t i = 0; i < R; ++i) {
        const double* x = ad.data() + i * C;
        double* y = out.data() + i * C;
        double m = x[0];
        for (size_t j = 1; j < C; ++j) m = std::max(m, x[j]);
        double s = 0.0;
        for (size_t j = 0; j < C; ++j) {
            y[j] = std::exp(x[j] - m);
            s += y[j];
        }
        for (size_t j = 0; j < C; ++j) y[j] /= s;
    }
    return TensorOps::make(a.shape(), std::move(out), {a}, [R, C](TensorNode& self) {
        auto& p = *self.parents[0];
        if (!p.requires_grad) return;
        for (size_t i = 0; i < R; ++i) {
            const double* y = self.data.data() + i * C;
            const double* g = self.grad.data() + i * C;
            double dot = 0.0;
            for (size_t j = 0; j < C; ++j) dot += g[j] * y[j];
            double* pg = p.grad.data() + i * C;
            for (size_t j = 0; j < C; ++j) pg[j] += y[j] * (g[j] - dot);
        }
    });
}

Tensor log_clamped(const Tensor& a, double floor) {
    std::vector<double> out(a.size());
    const auto& ad = a.data();
    for (size_t i = 0; i < out.size(); ++i) out[i] = std::log(std::max(ad[i], floor));
    return TensorOps::make(a.shape(), std::move(out), {a}, [floor](TensorNode& self) {
        auto& p = *self.parents[0];
        if (!p.requires_grad) return;
        for (size_t i = 0; i < self.grad.size(); ++i)
            if (p.data[i] > floor) p.grad[i] += self.grad[i] / p.data[i];
    });
}

// ---- reductions ----

Tensor sum(const Tensor& a) {
    double s = 0.0;
    for (double v : a.data()) s += v;
    return TensorOps::make({1}, {s}, {a}, [](TensorNode& self) {
        auto& p = *self.parents[0];
        if (!p.requires_grad) return;
        const double g = self.grad[0];
        for (double& pg : p.grad) pg += g;
    });
}

Tensor mean_all(const Tensor& a) {
    const size_t n = a.size();
    double s = 0.0;
    for (double v : a.data()) s += v;
    return TensorOps::make({1}, {s / static_cast<double>(n)}, {a}, [n](TensorNode& self) {
        auto& p = *self.parents[0];
        if (!p.requires_grad) return;
        const double g = self.grad[0] / static_cast<double>(n);
        for (double& pg : p.grad) pg += g;
    });
}

namespace {

// Column mean with an all-equal fast path so a stack of identical rows
// reduces to that row exactly.
std::vector<double> column_means(const std::vector<double>& d, size_t S, size_t D) {
    std::vector<double> mu(D);
    for (size_t j = 0; j < D; ++j) {
        const double first = d[j];
        bool all_equal = true;
        for (size_t i = 1; i < S && all_equal; ++i) all_equal = d[i * D + j] == first;
        if (all_equal) {
            mu[j] = first;
        } else {
            double s = 0.0;
            for (size_t i = 0; i < S; ++i) s += d[i * D + j];
            mu[j] = s / static_cast<double>(S);
        }
    }
    return mu;
}

}  // namespace

Tensor mean_rows(const Tensor& a) {
    require_rank2(a, "mean_rows");
    const size_t S = a.rows(), D = a.cols();
    return TensorOps::make({D}, column_means(a.data(), S, D), {a}, [S, D](TensorNode& self) {
        auto& p = *self.parents[0];
        if (!p.requires_grad) return;
        for (size_t i = 0; i < S; ++i)
            for (size_t j = 0; j < D; ++j)
                p.grad[i * D + j] += self.grad[j] / static_cast<double>(S);
    });
}

Tensor std_rows(const Tensor& a) {
    require_rank2(a, "std_rows");
    const size_t S = a.rows(), D = a.cols();
    const auto& d = a.data();
    std::vector<double> mu = column_means(d, S, D);
    std::vector<double> out(D);
    for (size_t j = 0; j < D; ++j) {
        double m2 = 0.0;
        for (size_t i = 0; i < S; ++i) {
            const double dev = d[i * D + j] - mu[j];
            m2 += dev * dev;
        }
        out[j] = std::sqrt(m2 / static_cast<double>(S));
    }
    return TensorOps::make({D}, std::move(out), {a}, [S, D, mu](TensorNode& self) {
        auto& p = *self.parents[0];
        if (!p.requires_grad) return;
        for (size_t j = 0; j < D; ++j) {
            const double sd = self.data[j];
            if (sd <= 0.0) continue;  // subgradient 0 at zero variance
            const double c = self.grad[j] / (static_cast<double>(S) * sd);
            for (size_t i = 0; i < S; ++i)
                p.grad[i * D + j] += c * (p.data[i * D + j] - mu[j]);
        }
    });
}

std::pair<Tensor, Tensor> reduce_mean_std(const Tensor& a) {
    require_rank2(a, "reduce_mean_std");
    if (a.rows() < 1) throw std::invalid_argument("reduce_mean_std: empty reduction (no rows)");
    return {mean_rows(a), std_rows(a)};
}

// ---- shape ops ----

Tensor reshape(const Tensor& a, std::vector<size_t> shape) {
    if (shape_numel(shape) != a.size()) dim_error("reshape", a.shape(), shape);
    std::vector<double> out = a.data();
    return TensorOps::make(std::move(shape), std::move(out), {a}, [](TensorNode& self) {
        accumulate(*self.parents[0], self.grad);
    });
}

Tensor slice_rows(const Tensor& a, size_t r0, size_t r1) {
    require_rank2(a, "slice_rows");
    const size_t R = a.rows(), C = a.cols();
    if (r0 >= r1 || r1 > R)
        throw std::invalid_argument("slice_rows: invalid range [" + std::to_string(r0) + "," +
                                    std::to_string(r1) + ") for " + a.shape_str());
    std::vector<double> out(a.data().begin() + r0 * C, a.data().begin() + r1 * C);
    return TensorOps::make({r1 - r0, C}, std::move(out), {a}, [r0, C](TensorNode& self) {
        auto& p = *self.parents[0];
        if (!p.requires_grad) return;
        for (size_t i = 0; i < self.grad.size(); ++i) p.grad[r0 * C + i] += self.grad[i];
    });
}

Tensor slice_cols(const Tensor& a, size_t c0, size_t c1) {
    require_rank2(a, "slice_cols");
    const size_t R = a.rows(), C = a.cols();
    if (c0 >= c1 || c1 > C)
        throw std::invalid_argument("slice_cols: invalid range [" + std::to_string(c0) + "," +
                                    std::to_string(c1) + ") for " + a.shape_str());
    const size_t W = c1 - c0;
    std::vector<double> out(R * W);
    const auto& ad = a.data();
    for (size_t i = 0; i < R; ++i)
        for (size_t j = 0; j < W; ++j) out[i * W + j] = ad[i * C + c0 + j];
    return TensorOps::make({R, W}, std::move(out), {a}, [R, C, c0, W](TensorNode& self) {
        auto& p = *self.parents[0];
        if (!p.requires_grad) return;
        for (size_t i = 0; i < R; ++i)
            for (size_t j = 0; j < W; ++j) p.grad[i * C + c0 + j] += self.grad[i * W + j];
    });
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_rows: no parts");
    const size_t C = parts[0].cols();
    size_t R = 0;
    for (const auto& p : parts) {
        require_rank2(p, "concat_rows");
        if (p.cols() != C) dim_error("concat_rows", parts[0].shape(), p.shape());
        R += p.rows();
    }
    std::vector<double> out;
    out.reserve(R * C);
    for (const auto& p : parts) out.insert(out.end(), p.data().begin(), p.data().end());
    return TensorOps::make({R, C}, std::move(out), parts, [](TensorNode& self) {
        size_t off = 0;
        for (auto& p : self.parents) {
            if (p->requires_grad)
                for (size_t i = 0; i < p->data.size(); ++i) p->grad[i] += self.grad[off + i];
            off += p->data.size();
        }
    });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_cols: no parts");
    const size_t R = parts[0].rows();
    size_t C = 0;
    for (const auto& p : parts) {
        require_rank2(p, "concat_cols");
        if (p.rows() != R) dim_error("concat_cols", parts[0].shape(), p.shape());
        C += p.cols();
    }
    std::vector<double> out(R * C);
    size_t coff = 0;
    for (const auto& p : parts) {
        const size_t W = p.cols();
        const auto& pd = p.data();
        for (size_t i = 0; i < R; ++i)
            for (size_t j = 0; j < W; ++j) out[i * C + coff + j] = pd[i * W + j];
        coff += W;
    }
    return TensorOps::make({R, C}, std::move(out), parts, [R, C](TensorNode& self) {
        size_t coff = 0;
        for (auto& p : self.parents) {
            const size_t W = p->shape[1];
            if (p->requires_grad)
                for (size_t i = 0; i < R; ++i)
                    for (size_t j = 0; j < W; ++j)
                        p->grad[i * W + j] += self.grad[i * C + coff + j];
            coff += W;
        }
    });
}

Tensor concat_vec(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_vec: no parts");
    size_t n = 0;
    for (const auto& p : parts) {
        if (p.rank() != 1)
            throw std::invalid_argument("concat_vec: expected rank-1 parts, got " + p.shape_str());
        n += p.size();
    }
    std::vector<double> out;
    out.reserve(n);
    for (const auto& p : parts) out.insert(out.end(), p.data().begin(), p.data().end());
    return TensorOps::make({n}, std::move(out), parts, [](TensorNode& self) {
        size_t off = 0;
        for (auto& p : self.parents) {
            if (p->requires_grad)
                for (size_t i = 0; i < p->data.size(); ++i) p->grad[i] += self.grad[off + i];
            off += p->data.size();
        }
    });
}

Tensor stack_rows(const std::vector<Tensor>& rows) {
    if (rows.empty()) throw std::invalid_argument("stack_rows: no rows");
    const size_t D = rows[0].size();
    for (const auto& r : rows) {
        if (r.rank() != 1 || r.size() != D) dim_error("stack_rows", rows[0].shape(), r.shape());
    }
    std::vector<double> out;
    out.reserve(rows.size() * D);
    for (const auto& r : rows) out.insert(out.end(), r.data().begin(), r.data().end());
    return TensorOps::make({rows.size(), D}, std::move(out), rows, [D](TensorNode& self) {
        for (size_t i = 0; i < self.parents.size(); ++i) {
            auto& p = *self.parents[i];
            if (p.requires_grad)
                for (size_t j = 0; j < D; ++j) p.grad[j] += self.grad[i * D + j];
        }
    });
}

Tensor pick_per_row(const Tensor& probs, const std::vector<int>& labels) {
    require_rank2(probs, "pick_per_row");
    const size_t B = probs.rows(), K = probs.cols();
    if (labels.size() != B)
        throw std::invalid_argument("pick_per_row: " + std::to_string(labels.size()) +
                                    " labels for " + std::to_string(B) + " rows");
    std::vector<double> out(B);
    for (size_t b = 0; b < B; ++b) {
        if (labels[b] < 0 || static_cast<size_t>(labels[b]) >= K)
            throw std::invalid_argument("pick_per_row: label " + std::to_string(labels[b]) +
                                        " out of range [0," + std::to_string(K) + ")");
        out[b] = probs.data()[b * K + labels[b]];
    }
    return TensorOps::make({B}, std::move(out), {probs}, [labels, K](TensorNode& self) {
        auto& p = *self.parents[0];
        if (!p.requires_grad) return;
        for (size_t b = 0; b < labels.size(); ++b) p.grad[b * K + labels[b]] += self.grad[b];
    });
}

// ---- composed layers ----

Tensor dense(const Tensor& x, const Tensor& W, const Tensor& b) {
    require_rank2(W, "dense");
    if (b.rank() != 1 || b.size() != W.cols()) dim_error("dense bias", W.shape(), b.shape());
    if (x.rank() == 1) {
        if (x.size() != W.rows()) dim_error("dense", x.shape(), W.shape());
        Tensor y = dense(reshape(x, {1, x.size()}), W, b);
        return reshape(y, {W.cols()});
    }
    require_rank2(x, "dense");
    if (x.cols() != W.rows()) dim_error("dense", x.shape(), W.shape());
    Tensor mm = matmul(x, W);
    // broadcast bias over rows
    const size_t R = mm.rows(), C = mm.cols();
    std::vector<double> out(mm.data());
    const auto& bd = b.data();
    for (size_t i = 0; i < R; ++i)
        for (size_t j = 0; j < C; ++j) out[i * C + j] += bd[j];
    return TensorOps::make({R, C}, std::move(out), {mm, b}, [R, C](TensorNode& self) {
        accumulate(*self.parents[0], self.grad);
        auto& pb = *self.parents[1];
        if (pb.requires_grad)
            for (size_t i = 0; i < R; ++i)
                for (size_t j = 0; j < C; ++j) pb.grad[j] += self.grad[i * C + j];
    });
}

Tensor conv1d_k1(const Tensor& x, const Tensor& W, const Tensor& b) {
    return dense(x, W, b);
}

Tensor lstm_seq(const Tensor& x, const Tensor& W, const Tensor& U_rec, const Tensor& b,
                const Tensor& h0, const Tensor& c0) {
    require_rank2(x, "lstm_seq");
    require_rank2(W, "lstm_seq W");
    require_rank2(U_rec, "lstm_seq U");
    const size_t T = x.rows(), I = x.cols();
    if (h0.rank() != 1 || c0.rank() != 1 || h0.size() != c0.size())
        throw std::invalid_argument("lstm_seq: h0/c0 must be rank-1 of equal size");
    const size_t U = h0.size();
    if (W.rows() != I || W.cols() != 4 * U) dim_error("lstm_seq W", x.shape(), W.shape());
    if (U_rec.rows() != U || U_rec.cols() != 4 * U) dim_error("lstm_seq U", h0.shape(), U_rec.shape());
    if (b.rank() != 1 || b.size() != 4 * U) dim_error("lstm_seq b", W.shape(), b.shape());

    Tensor h = reshape(h0, {1, U});
    Tensor c = reshape(c0, {1, U});
    std::vector<Tensor> hs;
    hs.reserve(T);
    for (size_t t = 0; t < T; ++t) {
        Tensor xt = slice_rows(x, t, t + 1);
        Tensor z = dense(xt, W, b);
        z = add(z, matmul(h, U_rec));
        Tensor gi = sigmoid(slice_cols(z, 0, U));
        Tensor gf = sigmoid(slice_cols(z, U, 2 * U));
        Tensor gc = tanh(slice_cols(z, 2 * U, 3 * U));
        Tensor go = sigmoid(slice_cols(z, 3 * U, 4 * U));
        c = add(mul(gf, c), mul(gi, gc));
        h = mul(go, tanh(c));
        hs.push_back(h);
    }
    return concat_rows(hs);
}

Tensor tensor_unchecked(std::vector<size_t> shape, std::vector<double> data, bool requires_grad) {
    if (shape_numel(shape) != data.size())
        throw std::invalid_argument("tensor_unchecked: shape/data size mismatch");
    auto n = std::make_shared<TensorNode>();
    n->shape = std::move(shape);
    n->data = std::move(data);
    n->requires_grad = requires_grad;
    return TensorOps::wrap(std::move(n));
}

// ---- backward ----

void backward(const Tensor& loss) {
    const auto& root = nd(loss);
    if (root->numel() != 1)
        throw std::invalid_argument("backward: loss must be scalar, got shape " + loss.shape_str());
    if (!root->requires_grad)
        throw std::runtime_error(
            "backward: loss is detached (no requires_grad tensor in its graph)");
    if (root->backward_done)
        throw std::runtime_error("backward: already invoked on this tensor");

    // iterative post-order DFS over the requires_grad subgraph
    std::vector<TensorNode*> topo;
    std::unordered_set<TensorNode*> visited;
    std::vector<std::pair<TensorNode*, size_t>> stack;
    stack.emplace_back(root.get(), 0);
    visited.insert(root.get());
    while (!stack.empty()) {
        auto& [n, idx] = stack.back();
        if (idx < n->parents.size()) {
            TensorNode* p = n->parents[idx++].get();
            if (p->requires_grad && !visited.count(p)) {
                visited.insert(p);
                stack.emplace_back(p, 0);
            }
        } else {
            topo.push_back(n);
            stack.pop_back();
        }
    }

    for (TensorNode* n : topo) n->grad.assign(n->data.size(), 0.0);
    root->grad[0] = 1.0;
    for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
        if ((*it)->backprop) (*it)->backprop(**it);
    }
    root->backward_done = true;
}

Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f, const Tensor& x,
                        double h) {
    detail::NoGradScope ng;
    std::vector<double> g(x.size());
    for (size_t i = 0; i < x.size(); ++i) {
        std::vector<double> d = x.data();
        d[i] += h;
        const double fp = f(Tensor(x.shape(), d));
        d[i] = x.data()[i] - h;
        const double fm = f(Tensor(x.shape(), std::move(d)));
        g[i] = (fp - fm) / (2.0 * h);
    }
    return Tensor(x.shape(), std::move(g));
}

}  // namespace camf
