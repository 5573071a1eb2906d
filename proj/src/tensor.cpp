#include "mvprof/tensor.hpp"

#include <atomic>
#include <cmath>
#include <cstring>
#include <sstream>

#include "mvprof/kernels.hpp"
#include "mvprof/rng.hpp"

namespace mvprof {

int shape_size(const Shape& s) {
    int n = 1;
    for (int d : s) {
        if (d <= 0)
            throw DimError("non-positive extent in shape " + shape_str(s));
        n *= d;
    }
    return n;
}

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < s.size(); ++i)
        os << (i ? "," : "") << s[i];
    os << ']';
    return os.str();
}

Tensor::Tensor(Shape shape)
    : shape_(std::move(shape)),
      data_(std::make_shared<std::vector<double>>(shape_size(shape_), 0.0)) {}

Tensor::Tensor(Shape shape, std::vector<double> values) : shape_(std::move(shape)) {
    if (int(values.size()) != shape_size(shape_))
        throw DimError("value count " + std::to_string(values.size()) +
                       " does not match shape " + shape_str(shape_));
    data_ = std::make_shared<std::vector<double>>(std::move(values));
}

Tensor Tensor::scalar(double v) { return Tensor(Shape{1}, {v}); }

Tensor Tensor::full(Shape shape, double v) {
    Tensor t(std::move(shape));
    std::fill(t.data_->begin(), t.data_->end(), v);
    return t;
}

Tensor Tensor::randn(Shape shape, Rng& rng, double stddev) {
    Tensor t(std::move(shape));
    for (double& x : *t.data_)
        x = rng.next_gaussian() * stddev;
    return t;
}

int Tensor::size() const { return data_ ? int(data_->size()) : 0; }

int Tensor::rows() const {
    if (rank() <= 1)
        return 1;
    int r = 1;
    for (int i = 0; i + 1 < rank(); ++i)
        r *= shape_[i];
    return r;
}

int Tensor::cols() const { return rank() == 0 ? 0 : shape_.back(); }

double Tensor::item() const {
    if (size() != 1)
        throw ContractError("item() on non-scalar tensor " + shape_str(shape_));
    return (*data_)[0];
}

Tensor& Tensor::set_requires_grad(bool on) {
    requires_grad_ = on;
    if (on && !grad_)
        grad_ = std::make_shared<std::vector<double>>(size(), 0.0);
    return *this;
}

double* Tensor::grad() { return grad_ ? grad_->data() : nullptr; }
const double* Tensor::grad() const { return grad_ ? grad_->data() : nullptr; }

void Tensor::zero_grad() {
    if (grad_)
        std::fill(grad_->begin(), grad_->end(), 0.0);
}

bool Tensor::all_finite() const {
    for (double v : *data_)
        if (!std::isfinite(v))
            return false;
    return true;
}

// ---- tape -----------------------------------------------------------------

namespace {
thread_local Tape* g_active_tape = nullptr;
std::atomic<std::uint64_t> g_epoch_counter{1};
} // namespace

Tape::Tape() : epoch_(g_epoch_counter.fetch_add(1)) {
    prev_ = g_active_tape;
    g_active_tape = this;
}

Tape::~Tape() { g_active_tape = prev_; }

Tape* Tape::active() { return g_active_tape; }

bool Tape::wants(const Tensor& t) const {
    return (t.tape_epoch_ == epoch_ && t.node_ >= 0) || t.requires_grad();
}

int Tape::track(const Tensor& t) {
    if (t.tape_epoch_ == epoch_ && t.node_ >= 0)
        return t.node_;
    if (!t.requires_grad())
        return kDead;
    const int id = int(nodes_.size());
    nodes_.push_back(Node{"leaf", {}, t.size(), nullptr, t.grad_storage()});
    t.node_ = id;
    t.tape_epoch_ = epoch_;
    return id;
}

void Tape::attach(const Tensor& out, const char* op, std::vector<int> inputs,
                  BackFn back) {
    const int id = int(nodes_.size());
    nodes_.push_back(Node{op, std::move(inputs), out.size(), std::move(back), nullptr});
    out.node_ = id;
    out.tape_epoch_ = epoch_;
}

double* Tape::adj(int node) {
    auto& buf = adjoints_[std::size_t(node)];
    if (buf.empty())
        buf.assign(std::size_t(nodes_[std::size_t(node)].size), 0.0);
    return buf.data();
}

void Tape::backward(const Tensor& loss) {
    if (loss.size() != 1)
        throw ContractError("backward: loss must be scalar, got " +
                            shape_str(loss.shape()));
    if (loss.tape_epoch_ != epoch_ || loss.node_ < 0)
        throw ContractError("backward: loss is not recorded on this tape");

    adjoints_.assign(nodes_.size(), {});
    adj(loss.node_)[0] = 1.0;

    for (int i = loss.node_; i >= 0; --i) {
        const auto& buf = adjoints_[std::size_t(i)];
        if (buf.empty())
            continue;
        Node& node = nodes_[std::size_t(i)];
        if (node.back) {
            node.back(*this, buf.data(), node.inputs);
        } else if (node.leaf_grad) {
            auto& g = *node.leaf_grad;
            for (std::size_t j = 0; j < g.size(); ++j)
                g[j] += buf[j];
        }
        adjoints_[std::size_t(i)].clear();
        adjoints_[std::size_t(i)].shrink_to_fit();
    }
    adjoints_.clear();
}

// ---- op plumbing ----------------------------------------------------------

namespace {

bool recording(const Tensor& a) {
    Tape* tp = Tape::active();
    return tp && tp->wants(a);
}

bool recording(const Tensor& a, const Tensor& b) {
    Tape* tp = Tape::active();
    return tp && (tp->wants(a) || tp->wants(b));
}

void acc(double* dst, const double* src, int n) {
    for (int i = 0; i < n; ++i)
        dst[i] += src[i];
}

} // namespace

// ---- matmul / transpose / reshape ------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.shape()[1] != b.shape()[0])
        throw DimError("matmul: incompatible shapes " + shape_str(a.shape()) +
                       " x " + shape_str(b.shape()));
    const int m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
    Tensor out(Shape{m, n});
    kernels::matmul_nn(a.data(), b.data(), out.data(), m, k, n, false);
    if (recording(a, b)) {
        Tape& tp = *Tape::active();
        auto sa = a.storage(), sb = b.storage();
        tp.attach(out, "matmul", {tp.track(a), tp.track(b)},
                  [sa, sb, m, k, n](Tape& t, const double* up,
                                    const std::vector<int>& in) {
                      if (in[0] != Tape::kDead)
                          kernels::matmul_nt(up, sb->data(), t.adj(in[0]), m, n,
                                             k, true);
                      if (in[1] != Tape::kDead)
                          kernels::matmul_tn(sa->data(), up, t.adj(in[1]), k, m,
                                             n, true);
                  });
    }
    return out;
}

Tensor transpose(const Tensor& x) {
    if (x.rank() != 2)
        throw DimError("transpose: expected rank-2, got " + shape_str(x.shape()));
    const int m = x.shape()[0], n = x.shape()[1];
    Tensor out(Shape{n, m});
    const double* xd = x.data();
    double* od = out.data();
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j)
            od[std::size_t(j) * m + i] = xd[std::size_t(i) * n + j];
    if (recording(x)) {
        Tape& tp = *Tape::active();
        tp.attach(out, "transpose", {tp.track(x)},
                  [m, n](Tape& t, const double* up, const std::vector<int>& in) {
                      if (in[0] == Tape::kDead)
                          return;
                      double* da = t.adj(in[0]);
                      for (int j = 0; j < n; ++j)
                          for (int i = 0; i < m; ++i)
                              da[std::size_t(i) * n + j] +=
                                  up[std::size_t(j) * m + i];
                  });
    }
    return out;
}

Tensor reshape(const Tensor& x, Shape shape) {
    if (shape_size(shape) != x.size())
        throw DimError("reshape: size mismatch " + shape_str(x.shape()) +
                       " -> " + shape_str(shape));
    Tensor out(std::move(shape), std::vector<double>(*x.storage()));
    if (recording(x)) {
        Tape& tp = *Tape::active();
        const int n = x.size();
        tp.attach(out, "reshape", {tp.track(x)},
                  [n](Tape& t, const double* up, const std::vector<int>& in) {
                      if (in[0] != Tape::kDead)
                          acc(t.adj(in[0]), up, n);
                  });
    }
    return out;
}

// ---- elementwise binary -----------------------------------------------------

namespace {

enum class BinMode { Same, RowBroadcast };

BinMode bin_mode(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() == b.shape())
        return BinMode::Same;
    if (b.rank() == 1 && a.rank() >= 2 && b.size() == a.cols())
        return BinMode::RowBroadcast;
    throw DimError(std::string(op) + ": incompatible shapes " +
                   shape_str(a.shape()) + " vs " + shape_str(b.shape()) +
                   " (only a trailing-dimension vector broadcasts)");
}

} // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    const BinMode mode = bin_mode(a, b, "add");
    Tensor out(a.shape());
    const int rows = a.rows(), cols = a.cols();
    const double* ad = a.data();
    const double* bd = b.data();
    double* od = out.data();
    if (mode == BinMode::Same) {
        for (int i = 0; i < rows * cols; ++i)
            od[i] = ad[i] + bd[i];
    } else {
        for (int r = 0; r < rows; ++r)
            for (int j = 0; j < cols; ++j)
                od[std::size_t(r) * cols + j] = ad[std::size_t(r) * cols + j] + bd[j];
    }
    if (recording(a, b)) {
        Tape& tp = *Tape::active();
        tp.attach(out, "add", {tp.track(a), tp.track(b)},
                  [mode, rows, cols](Tape& t, const double* up,
                                     const std::vector<int>& in) {
                      if (in[0] != Tape::kDead)
                          acc(t.adj(in[0]), up, rows * cols);
                      if (in[1] == Tape::kDead)
                          return;
                      if (mode == BinMode::Same) {
                          acc(t.adj(in[1]), up, rows * cols);
                      } else {
                          double* db = t.adj(in[1]);
                          for (int r = 0; r < rows; ++r)
                              for (int j = 0; j < cols; ++j)
                                  db[j] += up[std::size_t(r) * cols + j];
                      }
                  });
    }
    return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
    const BinMode mode = bin_mode(a, b, "sub");
    Tensor out(a.shape());
    const int rows = a.rows(), cols = a.cols();
    const double* ad = a.data();
    const double* bd = b.data();
    double* od = out.data();
    if (mode == BinMode::Same) {
        for (int i = 0; i < rows * cols; ++i)
            od[i] = ad[i] - bd[i];
    } else {
        for (int r = 0; r < rows; ++r)
            for (int j = 0; j < cols; ++j)
                od[std::size_t(r) * cols + j] = ad[std::size_t(r) * cols + j] - bd[j];
    }
    if (recording(a, b)) {
        Tape& tp = *Tape::active();
        tp.attach(out, "sub", {tp.track(a), tp.track(b)},
                  [mode, rows, cols](Tape& t, const double* up,
                                     const std::vector<int>& in) {
                      if (in[0] != Tape::kDead)
                          acc(t.adj(in[0]), up, rows * cols);
                      if (in[1] == Tape::kDead)
                          return;
                      double* db = t.adj(in[1]);
                      if (mode == BinMode::Same) {
                          for (int i = 0; i < rows * cols; ++i)
                              db[i] -= up[i];
                      } else {
                          for (int r = 0; r < rows; ++r)
                              for (int j = 0; j < cols; ++j)
                                  db[j] -= up[std::size_t(r) * cols + j];
                      }
                  });
    }
    return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
    const BinMode mode = bin_mode(a, b, "mul");
    Tensor out(a.shape());
    const int rows = a.rows(), cols = a.cols();
    const double* ad = a.data();
    const double* bd = b.data();
    double* od = out.data();
    if (mode == BinMode::Same) {
        for (int i = 0; i < rows * cols; ++i)
            od[i] = ad[i] * bd[i];
    } else {
        for (int r = 0; r < rows; ++r)
            for (int j = 0; j < cols; ++j)
                od[std::size_t(r) * cols + j] = ad[std::size_t(r) * cols + j] * bd[j];
    }
    if (recording(a, b)) {
        Tape& tp = *Tape::active();
        auto sa = a.storage(), sb = b.storage();
        tp.attach(out, "mul", {tp.track(a), tp.track(b)},
                  [mode, rows, cols, sa, sb](Tape& t, const double* up,
                                             const std::vector<int>& in) {
                      const double* ad = sa->data();
                      const double* bd = sb->data();
                      if (in[0] != Tape::kDead) {
                          double* da = t.adj(in[0]);
                          if (mode == BinMode::Same) {
                              for (int i = 0; i < rows * cols; ++i)
                                  da[i] += up[i] * bd[i];
                          } else {
                              for (int r = 0; r < rows; ++r)
                                  for (int j = 0; j < cols; ++j)
                                      da[std::size_t(r) * cols + j] +=
                                          up[std::size_t(r) * cols + j] * bd[j];
                          }
                      }
                      if (in[1] != Tape::kDead) {
                          double* db = t.adj(in[1]);
                          if (mode == BinMode::Same) {
                              for (int i = 0; i < rows * cols; ++i)
                                  db[i] += up[i] * ad[i];
                          } else {
                              for (int r = 0; r < rows; ++r)
                                  for (int j = 0; j < cols; ++j)
                                      db[j] += up[std::size_t(r) * cols + j] *
                                               ad[std::size_t(r) * cols + j];
                          }
                      }
                  });
    }
    return out;
}

Tensor div(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape())
        throw DimError("div: shapes must match, got " + shape_str(a.shape()) +
                       " vs " + shape_str(b.shape()));
    Tensor out(a.shape());
    const int n = a.size();
    const double* ad = a.data();
    const double* bd = b.data();
    double* od = out.data();
    for (int i = 0; i < n; ++i)
        od[i] = ad[i] / bd[i];
    if (recording(a, b)) {
        Tape& tp = *Tape::active();
        auto sa = a.storage(), sb = b.storage();
        tp.attach(out, "div", {tp.track(a), tp.track(b)},
                  [n, sa, sb](Tape& t, const double* up,
                              const std::vector<int>& in) {
                      const double* ad = sa->data();
                      const double* bd = sb->data();
                      if (in[0] != Tape::kDead) {
                          double* da = t.adj(in[0]);
                          for (int i = 0; i < n; ++i)
                              da[i] += up[i] / bd[i];
                      }
                      if (in[1] != Tape::kDead) {
                          double* db = t.adj(in[1]);
                          for (int i = 0; i < n; ++i)
                              db[i] -= up[i] * ad[i] / (bd[i] * bd[i]);
                      }
                  });
    }
    return out;
}

Tensor affine_scalar(const Tensor& x, double mulc, double addc) {
    Tensor out(x.shape());
    const int n = x.size();
    const double* xd = x.data();
    double* od = out.data();
    for (int i = 0; i < n; ++i)
        od[i] = mulc * xd[i] + addc;
    if (recording(x)) {
        Tape& tp = *Tape::active();
        tp.attach(out, "affine_scalar", {tp.track(x)},
                  [n, mulc](Tape& t, const double* up, const std::vector<int>& in) {
                      if (in[0] == Tape::kDead)
                          return;
                      double* dx = t.adj(in[0]);
                      for (int i = 0; i < n; ++i)
                          dx[i] += mulc * up[i];
                  });
    }
    return out;
}

// ---- elementwise unary ------------------------------------------------------

Tensor sigmoid(const Tensor& x) {
    Tensor out(x.shape());
    kernels::map_sigmoid(x.data(), out.data(), std::size_t(x.size()));
    if (recording(x)) {
        Tape& tp = *Tape::active();
        auto sy = out.storage();
        const int n = x.size();
        tp.attach(out, "sigmoid", {tp.track(x)},
                  [n, sy](Tape& t, const double* up, const std::vector<int>& in) {
                      if (in[0] == Tape::kDead)
                          return;
                      double* dx = t.adj(in[0]);
                      const double* y = sy->data();
                      for (int i = 0; i < n; ++i)
                          dx[i] += up[i] * y[i] * (1.0 - y[i]);
                  });
    }
    return out;
}

Tensor relu(const Tensor& x) {
    Tensor out(x.shape());
    kernels::map_relu(x.data(), out.data(), std::size_t(x.size()));
    if (recording(x)) {
        Tape& tp = *Tape::active();
        auto sx = x.storage();
        const int n = x.size();
        tp.attach(out, "relu", {tp.track(x)},
                  [n, sx](Tape& t, const double* up, const std::vector<int>& in) {
                      if (in[0] == Tape::kDead)
                          return;
                      double* dx = t.adj(in[0]);
                      const double* xd = sx->data();
                      for (int i = 0; i < n; ++i)
                          if (xd[i] > 0.0)
                              dx[i] += up[i];
                  });
    }
    return out;
}

Tensor gelu(const Tensor& x) {
    Tensor out(x.shape());
    kernels::map_gelu(x.data(), out.data(), std::size_t(x.size()));
    if (recording(x)) {
        Tape& tp = *Tape::active();
        auto sx = x.storage();
        const int n = x.size();
        tp.attach(out, "gelu", {tp.track(x)},
                  [n, sx](Tape& t, const double* up, const std::vector<int>& in) {
                      if (in[0] == Tape::kDead)
                          return;
                      double* dx = t.adj(in[0]);
                      const double* xd = sx->data();
                      for (int i = 0; i < n; ++i) {
                          const double v = xd[i];
                          const double u = kGeluC0 * (v + kGeluC1 * v * v * v);
                          const double th = std::tanh(u);
                          const double du = kGeluC0 * (1.0 + 3.0 * kGeluC1 * v * v);
                          dx[i] += up[i] * (0.5 * (1.0 + th) +
                                            0.5 * v * (1.0 - th * th) * du);
                      }
                  });
    }
    return out;
}

Tensor softplus(const Tensor& x) {
    Tensor out(x.shape());
    kernels::map_softplus(x.data(), out.data(), std::size_t(x.size()));
    if (recording(x)) {
        Tape& tp = *Tape::active();
        auto sx = x.storage();
        const int n = x.size();
        tp.attach(out, "softplus", {tp.track(x)},
                  [n, sx](Tape& t, const double* up, const std::vector<int>& in) {
                      if (in[0] == Tape::kDead)
                          return;
                      double* dx = t.adj(in[0]);
                      const double* xd = sx->data();
                      for (int i = 0; i < n; ++i) {
                          const double v = xd[i];
                          const double s = v >= 0.0
                                               ? 1.0 / (1.0 + std::exp(-v))
                                               : std::exp(v) / (1.0 + std::exp(v));
                          dx[i] += up[i] * s;
                      }
                  });
    }
    return out;
}

// ---- softmax / layer norm ---------------------------------------------------

Tensor softmax_lastdim(const Tensor& x) {
    if (x.rank() < 1 || x.cols() < 1)
        throw DimError("softmax_lastdim: need at least rank 1");
    if (!x.all_finite())
        throw NumericError("softmax_lastdim: non-finite input");
    const int rows = x.rows(), n = x.cols();
    Tensor out(x.shape());
    kernels::softmax_rows(x.data(), out.data(), rows, n);
    if (recording(x)) {
        Tape& tp = *Tape::active();
        auto sy = out.storage();
        tp.attach(out, "softmax", {tp.track(x)},
                  [rows, n, sy](Tape& t, const double* up,
                                const std::vector<int>& in) {
                      if (in[0] == Tape::kDead)
                          return;
                      double* dx = t.adj(in[0]);
                      const double* y = sy->data();
                      for (int r = 0; r < rows; ++r) {
                          const double* yr = y + std::size_t(r) * n;
                          const double* gr = up + std::size_t(r) * n;
                          double dot = 0.0;
                          for (int j = 0; j < n; ++j)
                              dot += gr[j] * yr[j];
                          double* dr = dx + std::size_t(r) * n;
                          for (int j = 0; j < n; ++j)
                              dr[j] += yr[j] * (gr[j] - dot);
                      }
                  });
    }
    return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps) {
    const int d = x.cols();
    if (gain.rank() != 1 || bias.rank() != 1 || gain.size() != d ||
        bias.size() != d)
        throw DimError("layer_norm: gain/bias must be [d]=" + std::to_string(d) +
                       ", got " + shape_str(gain.shape()) + " and " +
                       shape_str(bias.shape()));
    if (eps <= 0.0)
        throw ConfigError("layer_norm: eps must be positive");
    const int rows = x.rows();
    Tensor out(x.shape());
    auto xhat = std::make_shared<std::vector<double>>(std::size_t(rows) * d);
    auto inv_std = std::make_shared<std::vector<double>>(std::size_t(rows));
    kernels::layernorm_rows(x.data(), gain.data(), bias.data(), eps, out.data(),
                            xhat->data(), inv_std->data(), rows, d);
    if (recording(x, gain) || recording(bias)) {
        Tape& tp = *Tape::active();
        auto sg = gain.storage();
        tp.attach(out, "layer_norm",
                  {tp.track(x), tp.track(gain), tp.track(bias)},
                  [rows, d, xhat, inv_std, sg](Tape& t, const double* up,
                                               const std::vector<int>& in) {
                      const double* hat = xhat->data();
                      const double* gd = sg->data();
                      if (in[0] != Tape::kDead) {
                          double* dx = t.adj(in[0]);
                          for (int r = 0; r < rows; ++r) {
                              const double* ur = up + std::size_t(r) * d;
                              const double* hr = hat + std::size_t(r) * d;
                              double mean_g = 0.0, mean_gh = 0.0;
                              for (int j = 0; j < d; ++j) {
                                  const double gj = ur[j] * gd[j];
                                  mean_g += gj;
                                  mean_gh += gj * hr[j];
                              }
                              mean_g /= d;
                              mean_gh /= d;
                              const double s = (*inv_std)[std::size_t(r)];
                              double* dr = dx + std::size_t(r) * d;
                              for (int j = 0; j < d; ++j)
                                  dr[j] += s * (ur[j] * gd[j] - mean_g -
                                                hr[j] * mean_gh);
                          }
                      }
                      if (in[1] != Tape::kDead) {
                          double* dg = t.adj(in[1]);
                          for (int r = 0; r < rows; ++r)
                              for (int j = 0; j < d; ++j)
                                  dg[j] += up[std::size_t(r) * d + j] *
                                           hat[std::size_t(r) * d + j];
                      }
                      if (in[2] != Tape::kDead) {
                          double* db = t.adj(in[2]);
                          for (int r = 0; r < rows; ++r)
                              for (int j = 0; j < d; ++j)
                                  db[j] += up[std::size_t(r) * d + j];
                      }
                  });
    }
    return out;
}

// ---- reductions -------------------------------------------------------------

Tensor mean_axis(const Tensor& x, int axis) {
    if (x.rank() != 2)
        throw DimError("mean_axis: expected rank-2, got " + shape_str(x.shape()));
    if (axis != 0 && axis != 1)
        throw DimError("mean_axis: axis must be 0 or 1");
    const int m = x.shape()[0], n = x.shape()[1];
    Tensor out(axis == 0 ? Shape{n} : Shape{m});
    const double* xd = x.data();
    double* od = out.data();
    if (axis == 0) {
        for (int j = 0; j < n; ++j) {
            double s = 0.0;
            for (int i = 0; i < m; ++i)
                s += xd[std::size_t(i) * n + j];
            od[j] = s / m;
        }
    } else {
        for (int i = 0; i < m; ++i) {
            double s = 0.0;
            for (int j = 0; j < n; ++j)
                s += xd[std::size_t(i) * n + j];
            od[i] = s / n;
        }
    }
    if (recording(x)) {
        Tape& tp = *Tape::active();
        tp.attach(out, "mean_axis", {tp.track(x)},
                  [m, n, axis](Tape& t, const double* up,
                               const std::vector<int>& in) {
                      if (in[0] == Tape::kDead)
                          return;
                      double* dx = t.adj(in[0]);
                      if (axis == 0) {
                          for (int i = 0; i < m; ++i)
                              for (int j = 0; j < n; ++j)
                                  dx[std::size_t(i) * n + j] += up[j] / m;
                      } else {
                          for (int i = 0; i < m; ++i)
                              for (int j = 0; j < n; ++j)
                                  dx[std::size_t(i) * n + j] += up[i] / n;
                      }
                  });
    }
    return out;
}

Tensor sum_all(const Tensor& x) {
    double s = 0.0;
    const double* xd = x.data();
    for (int i = 0; i < x.size(); ++i)
        s += xd[i];
    Tensor out = Tensor::scalar(s);
    if (recording(x)) {
        Tape& tp = *Tape::active();
        const int n = x.size();
        tp.attach(out, "sum_all", {tp.track(x)},
                  [n](Tape& t, const double* up, const std::vector<int>& in) {
                      if (in[0] == Tape::kDead)
                          return;
                      double* dx = t.adj(in[0]);
                      for (int i = 0; i < n; ++i)
                          dx[i] += up[0];
                  });
    }
    return out;
}

// ---- concat / slice / gather ------------------------------------------------

Tensor concat_rows(const std::vector<Tensor>& parts) {
    if (parts.empty())
        throw DimError("concat_rows: no inputs");
    const int n = parts[0].cols();
    int total = 0;
    for (const Tensor& p : parts) {
        if (p.rank() != 2 || p.cols() != n)
            throw DimError("concat_rows: parts must be rank-2 with equal cols");
        total += p.shape()[0];
    }
    Tensor out(Shape{total, n});
    double* od = out.data();
    int off = 0;
    for (const Tensor& p : parts) {
        std::memcpy(od + std::size_t(off) * n, p.data(),
                    sizeof(double) * std::size_t(p.size()));
        off += p.shape()[0];
    }
    Tape* tpp = Tape::active();
    bool wanted = false;
    if (tpp)
        for (const Tensor& p : parts)
            wanted = wanted || tpp->wants(p);
    if (wanted) {
        Tape& tp = *tpp;
        std::vector<int> ids;
        std::vector<int> row_counts;
        for (const Tensor& p : parts) {
            ids.push_back(tp.track(p));
            row_counts.push_back(p.shape()[0]);
        }
        tp.attach(out, "concat_rows", ids,
                  [row_counts, n](Tape& t, const double* up,
                                  const std::vector<int>& in) {
                      int off = 0;
                      for (std::size_t k = 0; k < in.size(); ++k) {
                          const int rows = row_counts[k];
                          if (in[k] != Tape::kDead)
                              acc(t.adj(in[k]), up + std::size_t(off) * n,
                                  rows * n);
                          off += rows;
                      }
                  });
    }
    return out;
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
    if (parts.empty())
        throw DimError("concat_cols: no inputs");
    const int m = parts[0].rows();
    int total = 0;
    for (const Tensor& p : parts) {
        if (p.rank() != 2 || p.shape()[0] != m)
            throw DimError("concat_cols: parts must be rank-2 with equal rows");
        total += p.cols();
    }
    Tensor out(Shape{m, total});
    double* od = out.data();
    int off = 0;
    for (const Tensor& p : parts) {
        const int c = p.cols();
        for (int i = 0; i < m; ++i)
            std::memcpy(od + std::size_t(i) * total + off,
                        p.data() + std::size_t(i) * c, sizeof(double) * c);
        off += c;
    }
    Tape* tpp = Tape::active();
    bool wanted = false;
    if (tpp)
        for (const Tensor& p : parts)
            wanted = wanted || tpp->wants(p);
    if (wanted) {
        Tape& tp = *tpp;
        std::vector<int> ids;
        std::vector<int> col_counts;
        for (const Tensor& p : parts) {
            ids.push_back(tp.track(p));
            col_counts.push_back(p.cols());
        }
        tp.attach(out, "concat_cols", ids,
                  [col_counts, m, total](Tape& t, const double* up,
                                         const std::vector<int>& in) {
                      int off = 0;
                      for (std::size_t k = 0; k < in.size(); ++k) {
                          const int c = col_counts[k];
                          if (in[k] != Tape::kDead) {
                              double* d = t.adj(in[k]);
                              for (int i = 0; i < m; ++i)
                                  acc(d + std::size_t(i) * c,
                                      up + std::size_t(i) * total + off, c);
                          }
                          off += c;
                      }
                  });
    }
    return out;
}

Tensor slice_rows(const Tensor& x, int start, int len) {
    if (x.rank() != 2)
        throw DimError("slice_rows: expected rank-2, got " + shape_str(x.shape()));
    const int m = x.shape()[0], n = x.shape()[1];
    if (start < 0 || len < 1 || start + len > m)
        throw IndexError("slice_rows: range [" + std::to_string(start) + "," +
                         std::to_string(start + len) + ") out of " +
                         std::to_string(m) + " rows");
    Tensor out(Shape{len, n});
    std::memcpy(out.data(), x.data() + std::size_t(start) * n,
                sizeof(double) * std::size_t(len) * n);
    if (recording(x)) {
        Tape& tp = *Tape::active();
        tp.attach(out, "slice_rows", {tp.track(x)},
                  [start, len, n](Tape& t, const double* up,
                                  const std::vector<int>& in) {
                      if (in[0] != Tape::kDead)
                          acc(t.adj(in[0]) + std::size_t(start) * n, up, len * n);
                  });
    }
    return out;
}

Tensor slice_cols(const Tensor& x, int start, int len) {
    if (x.rank() < 1)
        throw DimError("slice_cols: need at least rank 1");
    const int rows = x.rows(), n = x.cols();
    if (start < 0 || len < 1 || start + len > n)
        throw IndexError("slice_cols: range [" + std::to_string(start) + "," +
                         std::to_string(start + len) + ") out of " +
                         std::to_string(n) + " cols");
    Shape os = x.shape();
    os.back() = len;
    Tensor out(os);
    double* od = out.data();
    const double* xd = x.data();
    for (int r = 0; r < rows; ++r)
        std::memcpy(od + std::size_t(r) * len, xd + std::size_t(r) * n + start,
                    sizeof(double) * len);
    if (recording(x)) {
        Tape& tp = *Tape::active();
        tp.attach(out, "slice_cols", {tp.track(x)},
                  [rows, n, start, len](Tape& t, const double* up,
                                        const std::vector<int>& in) {
                      if (in[0] == Tape::kDead)
                          return;
                      double* dx = t.adj(in[0]);
                      for (int r = 0; r < rows; ++r)
                          acc(dx + std::size_t(r) * n + start,
                              up + std::size_t(r) * len, len);
                  });
    }
    return out;
}

Tensor gather_rows(const Tensor& table, const std::vector<int>& ids) {
    if (table.rank() != 2)
        throw DimError("gather_rows: table must be rank-2");
    const int v = table.shape()[0], d = table.shape()[1];
    for (int id : ids)
        if (id < 0 || id >= v)
            throw IndexError("gather_rows: id " + std::to_string(id) +
                             " out of range [0," + std::to_string(v) + ")");
    const int l = int(ids.size());
    if (l == 0)
        throw DimError("gather_rows: empty id list");
    Tensor out(Shape{l, d});
    double* od = out.data();
    const double* td = table.data();
    for (int i = 0; i < l; ++i)
        std::memcpy(od + std::size_t(i) * d, td + std::size_t(ids[i]) * d,
                    sizeof(double) * d);
    if (recording(table)) {
        Tape& tp = *Tape::active();
        tp.attach(out, "gather_rows", {tp.track(table)},
                  [ids, d](Tape& t, const double* up, const std::vector<int>& in) {
                      if (in[0] == Tape::kDead)
                          return;
                      double* dt = t.adj(in[0]);
                      for (std::size_t i = 0; i < ids.size(); ++i)
                          acc(dt + std::size_t(ids[i]) * d, up + i * d, d);
                  });
    }
    return out;
}

Tensor scale_rows(const Tensor& x, const Tensor& s) {
    if (x.rank() != 2 || s.rank() != 1 || s.size() != x.shape()[0])
        throw DimError("scale_rows: need x[m,n] and s[m], got " +
                       shape_str(x.shape()) + " and " + shape_str(s.shape()));
    const int m = x.shape()[0], n = x.shape()[1];
    Tensor out(x.shape());
    const double* xd = x.data();
    const double* sd = s.data();
    double* od = out.data();
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j)
            od[std::size_t(i) * n + j] = xd[std::size_t(i) * n + j] * sd[i];
    if (recording(x, s)) {
        Tape& tp = *Tape::active();
        auto sx = x.storage(), ss = s.storage();
        tp.attach(out, "scale_rows", {tp.track(x), tp.track(s)},
                  [m, n, sx, ss](Tape& t, const double* up,
                                 const std::vector<int>& in) {
                      if (in[0] != Tape::kDead) {
                          double* dx = t.adj(in[0]);
                          const double* sd = ss->data();
                          for (int i = 0; i < m; ++i)
                              for (int j = 0; j < n; ++j)
                                  dx[std::size_t(i) * n + j] +=
                                      up[std::size_t(i) * n + j] * sd[i];
                      }
                      if (in[1] != Tape::kDead) {
                          double* ds = t.adj(in[1]);
                          const double* xd = sx->data();
                          for (int i = 0; i < m; ++i) {
                              double acc_i = 0.0;
                              for (int j = 0; j < n; ++j)
                                  acc_i += up[std::size_t(i) * n + j] *
                                           xd[std::size_t(i) * n + j];
                              ds[i] += acc_i;
                          }
                      }
                  });
    }
    return out;
}

// ---- linear -----------------------------------------------------------------

Tensor linear(const Tensor& x, const Tensor& w, const Tensor* b) {
    if (w.rank() != 2)
        throw DimError("linear: weight must be rank-2");
    const int d_out = w.shape()[0], d_in = w.shape()[1];
    if (x.cols() != d_in)
        throw DimError("linear: input " + shape_str(x.shape()) +
                       " does not match weight " + shape_str(w.shape()));
    if (b && (b->rank() != 1 || b->size() != d_out))
        throw DimError("linear: bias must be [" + std::to_string(d_out) + "]");
    const int rows = x.rows();
    Shape os = x.shape();
    os.back() = d_out;
    Tensor out(os);
    kernels::matmul_nt(x.data(), w.data(), out.data(), rows, d_in, d_out, false);
    if (b) {
        double* od = out.data();
        const double* bd = b->data();
        for (int r = 0; r < rows; ++r)
            for (int j = 0; j < d_out; ++j)
                od[std::size_t(r) * d_out + j] += bd[j];
    }
    Tape* tpp = Tape::active();
    const bool rec = tpp && (tpp->wants(x) || tpp->wants(w) || (b && tpp->wants(*b)));
    if (rec) {
        Tape& tp = *tpp;
        auto sx = x.storage(), sw = w.storage();
        std::vector<int> ids{tp.track(x), tp.track(w),
                             b ? tp.track(*b) : Tape::kDead};
        tp.attach(out, "linear", ids,
                  [rows, d_in, d_out, sx, sw](Tape& t, const double* up,
                                              const std::vector<int>& in) {
                      if (in[0] != Tape::kDead)
                          kernels::matmul_nn(up, sw->data(), t.adj(in[0]), rows,
                                             d_out, d_in, true);
                      if (in[1] != Tape::kDead)
                          kernels::matmul_tn(up, sx->data(), t.adj(in[1]), d_out,
                                             rows, d_in, true);
                      if (in[2] != Tape::kDead) {
                          double* db = t.adj(in[2]);
                          for (int r = 0; r < rows; ++r)
                              for (int j = 0; j < d_out; ++j)
                                  db[j] += up[std::size_t(r) * d_out + j];
                      }
                  });
    }
    return out;
}

// ---- cross entropy ----------------------------------------------------------

Tensor cross_entropy(const Tensor& logits, const std::vector<int>& targets) {
    if (logits.rank() != 2)
        throw DimError("cross_entropy: logits must be rank-2, got " +
                       shape_str(logits.shape()));
    const int b = logits.shape()[0], c = logits.shape()[1];
    if (int(targets.size()) != b)
        throw DimError("cross_entropy: " + std::to_string(targets.size()) +
                       " targets for " + std::to_string(b) + " rows");
    for (int t : targets)
        if (t < 0 || t >= c)
            throw IndexError("cross_entropy: target " + std::to_string(t) +
                             " out of range [0," + std::to_string(c) + ")");
    auto probs = std::make_shared<std::vector<double>>(std::size_t(b) * c);
    kernels::softmax_rows(logits.data(), probs->data(), b, c);
    const double* ld = logits.data();
    double loss = 0.0;
    for (int i = 0; i < b; ++i) {
        const double* row = ld + std::size_t(i) * c;
        double mx = row[0];
        for (int j = 1; j < c; ++j)
            mx = std::max(mx, row[j]);
        double lse = 0.0;
        for (int j = 0; j < c; ++j)
            lse += std::exp(row[j] - mx);
        loss += mx + std::log(lse) - row[targets[std::size_t(i)]];
    }
    loss /= b;
    Tensor out = Tensor::scalar(loss);
    if (recording(logits)) {
        Tape& tp = *Tape::active();
        tp.attach(out, "cross_entropy", {tp.track(logits)},
                  [b, c, probs, targets](Tape& t, const double* up,
                                         const std::vector<int>& in) {
                      if (in[0] == Tape::kDead)
                          return;
                      double* dl = t.adj(in[0]);
                      const double scale = up[0] / b;
                      const double* p = probs->data();
                      for (int i = 0; i < b; ++i) {
                          for (int j = 0; j < c; ++j)
                              dl[std::size_t(i) * c + j] +=
                                  scale * p[std::size_t(i) * c + j];
                          dl[std::size_t(i) * c + targets[std::size_t(i)]] -= scale;
                      }
                  });
    }
    return out;
}

// ---- optimizers --------------------------------------------------------------

long long param_count(const ParamList& params) {
    long long n = 0;
    for (const Param& p : params)
        n += p.tensor->size();
    return n;
}

void zero_grads(const ParamList& params) {
    for (const Param& p : params)
        p.tensor->zero_grad();
}

void optimizer_step(OptimizerState& state, const ParamList& params) {
    if (state.kind == OptKind::Adam && state.m.empty()) {
        state.m.resize(params.size());
        state.v.resize(params.size());
        for (std::size_t i = 0; i < params.size(); ++i) {
            state.m[i].assign(std::size_t(params[i].tensor->size()), 0.0);
            state.v[i].assign(std::size_t(params[i].tensor->size()), 0.0);
        }
    }
    if (state.kind == OptKind::Adam && state.m.size() != params.size())
        throw DimError("optimizer_step: moment table does not match params");

    state.step_count += 1;
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor& t = *params[i].tensor;
        const double* g = t.grad();
        if (!g)
            throw ContractError("optimizer_step: parameter '" + params[i].name +
                                "' has no gradient buffer");
        double* x = t.data();
        const int n = t.size();
        if (state.kind == OptKind::Sgd) {
            for (int j = 0; j < n; ++j)
                x[j] -= state.learning_rate * g[j];
        } else {
            if (int(state.m[i].size()) != n)
                throw DimError("optimizer_step: moment shape mismatch for '" +
                               params[i].name + "'");
            double* m = state.m[i].data();
            double* v = state.v[i].data();
            const double b1 = state.beta1, b2 = state.beta2;
            const double bc1 = 1.0 - std::pow(b1, double(state.step_count));
            const double bc2 = 1.0 - std::pow(b2, double(state.step_count));
            for (int j = 0; j < n; ++j) {
                m[j] = b1 * m[j] + (1.0 - b1) * g[j];
                v[j] = b2 * v[j] + (1.0 - b2) * g[j] * g[j];
                const double mh = m[j] / bc1;
                const double vh = v[j] / bc2;
                x[j] -= state.learning_rate * mh / (std::sqrt(vh) + state.epsilon);
            }
        }
    }
}

// ---- gradcheck ----------------------------------------------------------------

GradcheckReport gradcheck(const std::function<Tensor()>& loss_fn,
                          const ParamList& params, double step) {
    for (const Param& p : params) {
        if (!p.tensor->requires_grad())
            throw ContractError("gradcheck: param '" + p.name +
                                "' does not require grad");
        if (!p.tensor->all_finite())
            throw NumericError("gradcheck: non-finite values in param '" +
                               p.name + "'");
        p.tensor->zero_grad();
    }

    std::vector<std::vector<double>> analytic(params.size());
    {
        Tape tape;
        Tensor loss = loss_fn();
        if (!std::isfinite(loss.item()))
            throw NumericError("gradcheck: loss is not finite");
        tape.backward(loss);
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double* g = params[i].tensor->grad();
        analytic[i].assign(g, g + params[i].tensor->size());
        for (double v : analytic[i])
            if (!std::isfinite(v))
                throw NumericError("gradcheck: non-finite gradient in param '" +
                                   params[i].name + "'");
    }

    GradcheckReport report;
    for (std::size_t i = 0; i < params.size(); ++i) {
        double* x = params[i].tensor->data();
        const int n = params[i].tensor->size();
        for (int j = 0; j < n; ++j) {
            const double saved = x[j];
            x[j] = saved + step;
            const double f_plus = loss_fn().item();
            x[j] = saved - step;
            const double f_minus = loss_fn().item();
            x[j] = saved;
            if (!std::isfinite(f_plus) || !std::isfinite(f_minus))
                throw NumericError("gradcheck: non-finite loss while perturbing '" +
                                   params[i].name + "'");
            const double numeric = (f_plus - f_minus) / (2.0 * step);
            const double a = analytic[i][std::size_t(j)];
            const double rel = std::fabs(a - numeric) /
                               std::max({std::fabs(a), std::fabs(numeric), 1e-8});
            if (rel > report.max_rel_error) {
                report.max_rel_error = rel;
                report.worst_param = params[i].name;
                report.worst_index = j;
                report.analytic = a;
                report.numeric = numeric;
            }
        }
    }
    return report;
}

} // namespace mvprof
