#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "mvprof/error.hpp"

namespace mvprof {

class Rng;
class Tape;

using Shape = std::vector<int>;

int shape_size(const Shape& s);
std::string shape_str(const Shape& s);

// Dense row-major f64 tensor. Copies share storage (cheap handles); op
// outputs always own fresh buffers, so shared storage is effectively
// immutable within one forward pass. The optimizer mutates leaf buffers in
// place between tapes.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape);
    Tensor(Shape shape, std::vector<double> values);

    static Tensor scalar(double v);
    static Tensor full(Shape shape, double v);
    static Tensor randn(Shape shape, Rng& rng, double stddev = 1.0);

    const Shape& shape() const { return shape_; }
    int rank() const { return int(shape_.size()); }
    int size() const;
    // Row-major view as [rows, cols]; rank-1 tensors count as a single row.
    int rows() const;
    int cols() const;

    double* data() { return data_->data(); }
    const double* data() const { return data_->data(); }
    double item() const;

    Tensor& set_requires_grad(bool on = true);
    bool requires_grad() const { return requires_grad_; }
    double* grad();
    const double* grad() const;
    void zero_grad();

    std::shared_ptr<std::vector<double>> storage() const { return data_; }
    std::shared_ptr<std::vector<double>> grad_storage() const { return grad_; }

    bool all_finite() const;

private:
    friend class Tape;
    Shape shape_;
    std::shared_ptr<std::vector<double>> data_;
    std::shared_ptr<std::vector<double>> grad_;
    bool requires_grad_ = false;
    // Cached id on the most recent tape that saw this tensor.
    mutable int node_ = -1;
    mutable std::uint64_t tape_epoch_ = 0;
};

// Reverse-mode tape. Constructing a Tape makes it the active recorder for the
// current thread (RAII; the previous one is restored on destruction). Nodes
// are appended in execution order, so insertion order is a topological order
// and the backward sweep is a single reverse pass. Adjoint buffers live only
// for the duration of backward().
class Tape {
public:
    static constexpr int kDead = -2;

    Tape();
    ~Tape();
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    static Tape* active();

    // True if track(t) would yield a live node (recorded here or grad leaf).
    bool wants(const Tensor& t) const;
    // Node id for t: existing node, fresh leaf for requires_grad tensors,
    // kDead otherwise.
    int track(const Tensor& t);

    using BackFn =
        std::function<void(Tape&, const double* up, const std::vector<int>&)>;
    void attach(const Tensor& out, const char* op, std::vector<int> inputs,
                BackFn back);

    // Adjoint accumulation buffer for a node, zero-initialized on demand.
    double* adj(int node);

    // Accumulates d(loss)/d(leaf) into every requires_grad leaf recorded on
    // this tape. loss must be a scalar recorded here.
    void backward(const Tensor& loss);

    std::size_t node_count() const { return nodes_.size(); }

private:
    struct Node {
        const char* op;
        std::vector<int> inputs;
        int size;
        BackFn back; // empty for leaves
        std::shared_ptr<std::vector<double>> leaf_grad;
    };
    std::vector<Node> nodes_;
    std::vector<std::vector<double>> adjoints_;
    std::uint64_t epoch_;
    Tape* prev_ = nullptr;
};

// ---- operations ---------------------------------------------------------
// All ops compute eagerly and, when a tape is active and an input is
// grad-relevant, record their backward rule on it.

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& x);
Tensor reshape(const Tensor& x, Shape shape);

// Elementwise; `b` may also be a rank-1 vector matching a's last dimension,
// broadcast across rows (the only supported broadcast).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b); // same shape only

// y = mul * x + add
Tensor affine_scalar(const Tensor& x, double mul, double add);

Tensor sigmoid(const Tensor& x);
Tensor relu(const Tensor& x);
Tensor gelu(const Tensor& x);
Tensor softplus(const Tensor& x);

Tensor softmax_lastdim(const Tensor& x);
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps);

// 2-D only; axis 0 -> [cols], axis 1 -> [rows].
Tensor mean_axis(const Tensor& x, int axis);
Tensor sum_all(const Tensor& x);

Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor slice_rows(const Tensor& x, int start, int len);
Tensor slice_cols(const Tensor& x, int start, int len);

// Embedding-style lookup with scatter-add backward.
Tensor gather_rows(const Tensor& table, const std::vector<int>& ids);
// out[i,:] = x[i,:] * s[i]
Tensor scale_rows(const Tensor& x, const Tensor& s);

// y = x W^T (+ b); W is [d_out, d_in], x is [..., d_in].
Tensor linear(const Tensor& x, const Tensor& w, const Tensor* b);

// Mean negative log-softmax of target classes; logits [b, c].
Tensor cross_entropy(const Tensor& logits, const std::vector<int>& targets);

// ---- optimizers ----------------------------------------------------------

struct Param {
    std::string name;
    Tensor* tensor;
};
using ParamList = std::vector<Param>;

long long param_count(const ParamList& params);

enum class OptKind { Sgd, Adam };

struct OptimizerState {
    OptKind kind = OptKind::Adam;
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    long step_count = 0;
    // First/second moments per parameter, allocated on the first Adam step.
    std::vector<std::vector<double>> m;
    std::vector<std::vector<double>> v;
};

void optimizer_step(OptimizerState& state, const ParamList& params);
void zero_grads(const ParamList& params);

// ---- finite-difference gradient check ------------------------------------

struct GradcheckReport {
    double max_rel_error = 0.0;
    std::string worst_param;
    int worst_index = -1;
    double analytic = 0.0;
    double numeric = 0.0;
};

// Compares tape gradients of `loss_fn` against central differences
// (f(t+h)-f(t-h))/2h for every component of every param. Relative error is
// |a-n| / max(|a|, |n|, 1e-8).
GradcheckReport gradcheck(const std::function<Tensor()>& loss_fn,
                          const ParamList& params, double step = 1e-6);

} // namespace mvprof
