#include "capgen/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace capgen::ag {

namespace {

int shape_numel(const std::vector<int>& shape) {
  int n = 1;
  for (int e : shape) {
    if (e <= 0) throw std::invalid_argument("tensor: extents must be positive");
    n *= e;
  }
  return n;
}

void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

// C += A(m x k) * B(k x n)
void mm_nn_acc(std::span<double> c, std::span<const double> a, std::span<const double> b,
               int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const double* arow = a.data() + static_cast<std::size_t>(i) * k;
    double* crow = c.data() + static_cast<std::size_t>(i) * n;
    for (int p = 0; p < k; ++p) {
      const double av = arow[p];
      if (av == 0.0) continue;
      const double* brow = b.data() + static_cast<std::size_t>(p) * n;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// C += A(m x k) * B(n x k)^T
void mm_nt_acc(std::span<double> c, std::span<const double> a, std::span<const double> b,
               int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const double* arow = a.data() + static_cast<std::size_t>(i) * k;
    double* crow = c.data() + static_cast<std::size_t>(i) * n;
    for (int j = 0; j < n; ++j) {
      const double* brow = b.data() + static_cast<std::size_t>(j) * k;
      double acc = 0.0;
      for (int p = 0; p < k; ++p) acc += arow[p] * brow[p];
      crow[j] += acc;
    }
  }
}

// C += A(k x m)^T * B(k x n)
void mm_tn_acc(std::span<double> c, std::span<const double> a, std::span<const double> b,
               int m, int k, int n) {
  for (int p = 0; p < k; ++p) {
    const double* arow = a.data() + static_cast<std::size_t>(p) * m;
    const double* brow = b.data() + static_cast<std::size_t>(p) * n;
    for (int i = 0; i < m; ++i) {
      const double av = arow[i];
      if (av == 0.0) continue;
      double* crow = c.data() + static_cast<std::size_t>(i) * n;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

}  // namespace

// ---- Tensor ----

Tensor::Tensor(std::vector<int> shape, std::vector<double> data, bool requires_grad) {
  const int n = shape_numel(shape);
  require(static_cast<std::size_t>(n) == data.size(),
          "tensor: shape product does not match data length");
  impl_ = std::make_shared<Impl>();
  impl_->shape = std::move(shape);
  impl_->data = std::move(data);
  impl_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(std::vector<int> shape, bool requires_grad) {
  const int n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<double>(static_cast<std::size_t>(n), 0.0),
                requires_grad);
}

Tensor Tensor::full(std::vector<int> shape, double value, bool requires_grad) {
  const int n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<double>(static_cast<std::size_t>(n), value),
                requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor({1}, {value}, requires_grad);
}

Tensor Tensor::vec(std::vector<double> values, bool requires_grad) {
  const int n = static_cast<int>(values.size());
  return Tensor({n}, std::move(values), requires_grad);
}

Tensor Tensor::from_rows(std::initializer_list<std::initializer_list<double>> rows,
                         bool requires_grad) {
  const int m = static_cast<int>(rows.size());
  require(m > 0, "from_rows: empty");
  const int n = static_cast<int>(rows.begin()->size());
  std::vector<double> data;
  data.reserve(static_cast<std::size_t>(m) * n);
  for (const auto& r : rows) {
    require(static_cast<int>(r.size()) == n, "from_rows: ragged rows");
    data.insert(data.end(), r.begin(), r.end());
  }
  return Tensor({m, n}, std::move(data), requires_grad);
}

const std::vector<int>& Tensor::shape() const { return impl_->shape; }
int Tensor::ndim() const { return static_cast<int>(impl_->shape.size()); }
int Tensor::numel() const { return static_cast<int>(impl_->data.size()); }

int Tensor::rows() const {
  require(ndim() == 2, "rows(): tensor is not rank-2");
  return impl_->shape[0];
}

int Tensor::cols() const {
  require(ndim() == 2, "cols(): tensor is not rank-2");
  return impl_->shape[1];
}

bool Tensor::requires_grad() const { return impl_->requires_grad; }

std::span<const double> Tensor::data() const { return impl_->data; }
std::span<double> Tensor::mutable_data() { return impl_->data; }

double Tensor::item() const {
  require(numel() == 1, "item(): tensor is not a scalar");
  return impl_->data[0];
}

double Tensor::at(int r, int c) const {
  return impl_->data[static_cast<std::size_t>(r) * cols() + c];
}

void Tensor::ensure_grad() const {
  if (impl_->grad.size() != impl_->data.size()) impl_->grad.assign(impl_->data.size(), 0.0);
}

bool Tensor::grad_allocated() const {
  return impl_ && impl_->grad.size() == impl_->data.size();
}

std::span<const double> Tensor::grad() const {
  ensure_grad();
  return impl_->grad;
}

std::span<double> Tensor::grad_mut() const {
  ensure_grad();
  return impl_->grad;
}

void Tensor::zero_grad() const {
  if (grad_allocated()) std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
}

// ---- Tape ----

Tape Tape::disabled() { return Tape(false); }

void Tape::record(std::function<void()> backward_fn) {
  if (active_) entries_.push_back(std::move(backward_fn));
}

void Tape::backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1)
    throw std::invalid_argument("backward: loss must be a scalar tensor");
  loss.grad_mut()[0] += 1.0;
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) (*it)();
}

// ---- ops ----

namespace {

bool want_grad(const Tape& tape, std::initializer_list<const Tensor*> inputs) {
  if (!tape.active()) return false;
  for (const Tensor* t : inputs)
    if (t->requires_grad()) return true;
  return false;
}

}  // namespace

Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b) {
  require(a.ndim() == 2 && b.ndim() == 2, "matmul: operands must be rank-2");
  require(a.cols() == b.rows(), "matmul: inner dimensions " + std::to_string(a.cols()) +
                                    " and " + std::to_string(b.rows()) + " do not match");
  const int m = a.rows(), k = a.cols(), n = b.cols();
  const bool rg = want_grad(tape, {&a, &b});
  Tensor out = Tensor::zeros({m, n}, rg);
  mm_nn_acc(out.mutable_data(), a.data(), b.data(), m, k, n);
  if (rg) {
    tape.record([a, b, out, m, k, n]() mutable {
      if (!out.grad_allocated()) return;
      auto dc = out.grad();
      if (a.requires_grad()) mm_nt_acc(a.grad_mut(), dc, b.data(), m, n, k);   // dA = dC B^T
      if (b.requires_grad()) mm_tn_acc(b.grad_mut(), a.data(), dc, k, m, n);   // dB = A^T dC
    });
  }
  return out;
}

Tensor transpose(Tape& tape, const Tensor& x) {
  require(x.ndim() == 2, "transpose: operand must be rank-2");
  const int m = x.rows(), n = x.cols();
  const bool rg = want_grad(tape, {&x});
  Tensor out = Tensor::zeros({n, m}, rg);
  {
    auto src = x.data();
    auto dst = out.mutable_data();
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j)
        dst[static_cast<std::size_t>(j) * m + i] = src[static_cast<std::size_t>(i) * n + j];
  }
  if (rg) {
    tape.record([x, out, m, n]() mutable {
      if (!out.grad_allocated()) return;
      auto dy = out.grad();
      auto dx = x.grad_mut();
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j)
          dx[static_cast<std::size_t>(i) * n + j] += dy[static_cast<std::size_t>(j) * m + i];
    });
  }
  return out;
}

Tensor add(Tape& tape, const Tensor& a, const Tensor& b) {
  const bool rg = want_grad(tape, {&a, &b});
  if (a.shape() == b.shape()) {
    Tensor out = Tensor::zeros(a.shape(), rg);
    auto dst = out.mutable_data();
    auto pa = a.data(), pb = b.data();
    for (int i = 0; i < a.numel(); ++i) dst[i] = pa[i] + pb[i];
    if (rg) {
      tape.record([a, b, out]() mutable {
        if (!out.grad_allocated()) return;
        auto dy = out.grad();
        if (a.requires_grad()) {
          auto da = a.grad_mut();
          for (int i = 0; i < a.numel(); ++i) da[i] += dy[i];
        }
        if (b.requires_grad()) {
          auto db = b.grad_mut();
          for (int i = 0; i < b.numel(); ++i) db[i] += dy[i];
        }
      });
    }
    return out;
  }
  // matrix + broadcast of a bias row over rows ([n] or [1,n])
  const bool bias_like =
      a.ndim() == 2 && ((b.ndim() == 1 && b.numel() == a.cols()) ||
                        (b.ndim() == 2 && b.rows() == 1 && b.cols() == a.cols()));
  require(bias_like, "add: shapes incompatible (want equal shapes or [m,n] + [n])");
  const int m = a.rows(), n = a.cols();
  Tensor out = Tensor::zeros({m, n}, rg);
  {
    auto dst = out.mutable_data();
    auto pa = a.data(), pb = b.data();
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j)
        dst[static_cast<std::size_t>(i) * n + j] = pa[static_cast<std::size_t>(i) * n + j] + pb[j];
  }
  if (rg) {
    tape.record([a, b, out, m, n]() mutable {
      if (!out.grad_allocated()) return;
      auto dy = out.grad();
      if (a.requires_grad()) {
        auto da = a.grad_mut();
        for (int i = 0; i < m * n; ++i) da[i] += dy[i];
      }
      if (b.requires_grad()) {
        auto db = b.grad_mut();
        for (int i = 0; i < m; ++i)
          for (int j = 0; j < n; ++j) db[j] += dy[static_cast<std::size_t>(i) * n + j];
      }
    });
  }
  return out;
}

Tensor mul(Tape& tape, const Tensor& a, const Tensor& b) {
  require(a.shape() == b.shape(), "mul: shapes must match");
  const bool rg = want_grad(tape, {&a, &b});
  Tensor out = Tensor::zeros(a.shape(), rg);
  auto dst = out.mutable_data();
  auto pa = a.data(), pb = b.data();
  for (int i = 0; i < a.numel(); ++i) dst[i] = pa[i] * pb[i];
  if (rg) {
    tape.record([a, b, out]() mutable {
      if (!out.grad_allocated()) return;
      auto dy = out.grad();
      if (a.requires_grad()) {
        auto da = a.grad_mut();
        auto vb = b.data();
        for (int i = 0; i < a.numel(); ++i) da[i] += dy[i] * vb[i];
      }
      if (b.requires_grad()) {
        auto db = b.grad_mut();
        auto va = a.data();
        for (int i = 0; i < b.numel(); ++i) db[i] += dy[i] * va[i];
      }
    });
  }
  return out;
}

Tensor scale(Tape& tape, const Tensor& x, double s) {
  const bool rg = want_grad(tape, {&x});
  Tensor out = Tensor::zeros(x.shape(), rg);
  auto dst = out.mutable_data();
  auto px = x.data();
  for (int i = 0; i < x.numel(); ++i) dst[i] = px[i] * s;
  if (rg) {
    tape.record([x, out, s]() mutable {
      if (!out.grad_allocated()) return;
      auto dy = out.grad();
      auto dx = x.grad_mut();
      for (int i = 0; i < x.numel(); ++i) dx[i] += dy[i] * s;
    });
  }
  return out;
}

Tensor relu(Tape& tape, const Tensor& x) {
  const bool rg = want_grad(tape, {&x});
  Tensor out = Tensor::zeros(x.shape(), rg);
  auto dst = out.mutable_data();
  auto px = x.data();
  for (int i = 0; i < x.numel(); ++i) dst[i] = px[i] > 0.0 ? px[i] : 0.0;
  if (rg) {
    tape.record([x, out]() mutable {
      if (!out.grad_allocated()) return;
      auto dy = out.grad();
      auto dx = x.grad_mut();
      auto px2 = x.data();
      for (int i = 0; i < x.numel(); ++i)
        if (px2[i] > 0.0) dx[i] += dy[i];
    });
  }
  return out;
}

Tensor sigmoid(Tape& tape, const Tensor& x) {
  const bool rg = want_grad(tape, {&x});
  Tensor out = Tensor::zeros(x.shape(), rg);
  auto dst = out.mutable_data();
  auto px = x.data();
  for (int i = 0; i < x.numel(); ++i) dst[i] = 1.0 / (1.0 + std::exp(-px[i]));
  if (rg) {
    tape.record([x, out]() mutable {
      if (!out.grad_allocated()) return;
      auto dy = out.grad();
      auto dx = x.grad_mut();
      auto py = out.data();
      for (int i = 0; i < x.numel(); ++i) dx[i] += dy[i] * py[i] * (1.0 - py[i]);
    });
  }
  return out;
}

Tensor tanh_op(Tape& tape, const Tensor& x) {
  const bool rg = want_grad(tape, {&x});
  Tensor out = Tensor::zeros(x.shape(), rg);
  auto dst = out.mutable_data();
  auto px = x.data();
  for (int i = 0; i < x.numel(); ++i) dst[i] = std::tanh(px[i]);
  if (rg) {
    tape.record([x, out]() mutable {
      if (!out.grad_allocated()) return;
      auto dy = out.grad();
      auto dx = x.grad_mut();
      auto py = out.data();
      for (int i = 0; i < x.numel(); ++i) dx[i] += dy[i] * (1.0 - py[i] * py[i]);
    });
  }
  return out;
}

Tensor softmax_rows(Tape& tape, const Tensor& x) {
  require(x.ndim() == 2, "softmax_rows: operand must be rank-2");
  const int m = x.rows(), n = x.cols();
  const bool rg = want_grad(tape, {&x});
  Tensor out = Tensor::zeros({m, n}, rg);
  {
    auto dst = out.mutable_data();
    auto px = x.data();
    for (int i = 0; i < m; ++i) {
      const double* row = px.data() + static_cast<std::size_t>(i) * n;
      double* orow = dst.data() + static_cast<std::size_t>(i) * n;
      double mx = row[0];
      for (int j = 1; j < n; ++j) mx = std::max(mx, row[j]);
      double total = 0.0;
      for (int j = 0; j < n; ++j) {
        orow[j] = std::exp(row[j] - mx);
        total += orow[j];
      }
      const double inv = 1.0 / total;
      for (int j = 0; j < n; ++j) orow[j] *= inv;
    }
  }
  if (rg) {
    tape.record([x, out, m, n]() mutable {
      if (!out.grad_allocated()) return;
      auto dy = out.grad();
      auto dx = x.grad_mut();
      auto py = out.data();
      for (int i = 0; i < m; ++i) {
        const double* yrow = py.data() + static_cast<std::size_t>(i) * n;
        const double* gyrow = dy.data() + static_cast<std::size_t>(i) * n;
        double* gxrow = dx.data() + static_cast<std::size_t>(i) * n;
        double dot = 0.0;
        for (int j = 0; j < n; ++j) dot += gyrow[j] * yrow[j];
        for (int j = 0; j < n; ++j) gxrow[j] += yrow[j] * (gyrow[j] - dot);
      }
    });
  }
  return out;
}

Tensor layer_norm(Tape& tape, const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps) {
  require(x.ndim() == 2, "layer_norm: input must be rank-2");
  const int m = x.rows(), n = x.cols();
  require(gain.ndim() == 1 && gain.numel() == n, "layer_norm: gain must have shape [cols]");
  require(bias.ndim() == 1 && bias.numel() == n, "layer_norm: bias must have shape [cols]");
  const bool rg = want_grad(tape, {&x, &gain, &bias});
  Tensor out = Tensor::zeros({m, n}, rg);
  // normalized rows are stashed for the backward rule
  Tensor xhat = Tensor::zeros({m, n});
  Tensor inv_sigma = Tensor::zeros({m});
  {
    auto px = x.data();
    auto pg = gain.data();
    auto pb = bias.data();
    auto ph = xhat.mutable_data();
    auto ps = inv_sigma.mutable_data();
    auto dst = out.mutable_data();
    for (int i = 0; i < m; ++i) {
      const double* row = px.data() + static_cast<std::size_t>(i) * n;
      double mean = 0.0;
      for (int j = 0; j < n; ++j) mean += row[j];
      mean /= n;
      double var = 0.0;
      for (int j = 0; j < n; ++j) var += (row[j] - mean) * (row[j] - mean);
      var /= n;
      const double inv = 1.0 / std::sqrt(var + eps);
      ps[i] = inv;
      for (int j = 0; j < n; ++j) {
        const double h = (row[j] - mean) * inv;
        ph[static_cast<std::size_t>(i) * n + j] = h;
        dst[static_cast<std::size_t>(i) * n + j] = h * pg[j] + pb[j];
      }
    }
  }
  if (rg) {
    tape.record([x, gain, bias, out, xhat, inv_sigma, m, n]() mutable {
      if (!out.grad_allocated()) return;
      auto dy = out.grad();
      auto ph = xhat.data();
      auto ps = inv_sigma.data();
      auto pg = gain.data();
      for (int i = 0; i < m; ++i) {
        const double* gyrow = dy.data() + static_cast<std::size_t>(i) * n;
        const double* hrow = ph.data() + static_cast<std::size_t>(i) * n;
        if (x.requires_grad()) {
          auto dx = x.grad_mut();
          double* gxrow = dx.data() + static_cast<std::size_t>(i) * n;
          double sum_g = 0.0, sum_gh = 0.0;
          for (int j = 0; j < n; ++j) {
            const double g = gyrow[j] * pg[j];
            sum_g += g;
            sum_gh += g * hrow[j];
          }
          for (int j = 0; j < n; ++j) {
            const double g = gyrow[j] * pg[j];
            gxrow[j] += ps[i] * (g - sum_g / n - hrow[j] * sum_gh / n);
          }
        }
        if (gain.requires_grad()) {
          auto dg = gain.grad_mut();
          for (int j = 0; j < n; ++j) dg[j] += gyrow[j] * hrow[j];
        }
        if (bias.requires_grad()) {
          auto db = bias.grad_mut();
          for (int j = 0; j < n; ++j) db[j] += gyrow[j];
        }
      }
    });
  }
  return out;
}

Tensor embedding_lookup(Tape& tape, const Tensor& table, std::span<const int> ids) {
  require(table.ndim() == 2, "embedding_lookup: table must be rank-2");
  const int v = table.rows(), d = table.cols();
  const int t = static_cast<int>(ids.size());
  require(t > 0, "embedding_lookup: empty id list");
  for (int id : ids)
    if (id < 0 || id >= v)
      throw std::out_of_range("embedding_lookup: id " + std::to_string(id) +
                              " outside table of size " + std::to_string(v));
  const bool rg = want_grad(tape, {&table});
  Tensor out = Tensor::zeros({t, d}, rg);
  {
    auto dst = out.mutable_data();
    auto src = table.data();
    for (int i = 0; i < t; ++i)
      std::copy_n(src.data() + static_cast<std::size_t>(ids[i]) * d, d,
                  dst.data() + static_cast<std::size_t>(i) * d);
  }
  if (rg) {
    std::vector<int> ids_copy(ids.begin(), ids.end());
    tape.record([table, out, ids_copy, d]() mutable {
      if (!out.grad_allocated()) return;
      auto dy = out.grad();
      auto dt = table.grad_mut();
      for (std::size_t i = 0; i < ids_copy.size(); ++i) {
        const double* grow = dy.data() + i * d;
        double* trow = dt.data() + static_cast<std::size_t>(ids_copy[i]) * d;
        for (int j = 0; j < d; ++j) trow[j] += grow[j];
      }
    });
  }
  return out;
}

Tensor dropout(Tape& tape, const Tensor& x, double p, bool training, Rng& rng) {
  require(p >= 0.0 && p < 1.0, "dropout: p must be in [0, 1)");
  if (!training || p == 0.0) return x;  // identity
  const bool rg = want_grad(tape, {&x});
  Tensor out = Tensor::zeros(x.shape(), rg);
  // survivors scaled by 1/(1-p) so the expectation matches the input
  Tensor mask = Tensor::zeros(x.shape());
  {
    const double keep_scale = 1.0 / (1.0 - p);
    auto pm = mask.mutable_data();
    auto dst = out.mutable_data();
    auto px = x.data();
    for (int i = 0; i < x.numel(); ++i) {
      pm[i] = rng.uniform() >= p ? keep_scale : 0.0;
      dst[i] = px[i] * pm[i];
    }
  }
  if (rg) {
    tape.record([x, out, mask]() mutable {
      if (!out.grad_allocated()) return;
      auto dy = out.grad();
      auto dx = x.grad_mut();
      auto pm = mask.data();
      for (int i = 0; i < x.numel(); ++i) dx[i] += dy[i] * pm[i];
    });
  }
  return out;
}

Tensor cross_entropy(Tape& tape, const Tensor& logits, std::span<const int> targets,
                     std::span<const std::uint8_t> mask) {
  require(logits.ndim() == 2, "cross_entropy: logits must be rank-2");
  const int t = logits.rows(), v = logits.cols();
  require(static_cast<int>(targets.size()) == t, "cross_entropy: one target per row required");
  require(mask.empty() || static_cast<int>(mask.size()) == t,
          "cross_entropy: mask length must match rows");
  for (int id : targets)
    if (id < 0 || id >= v)
      throw std::out_of_range("cross_entropy: target id " + std::to_string(id) +
                              " outside vocabulary of size " + std::to_string(v));
  int n_used = 0;
  for (int i = 0; i < t; ++i)
    if (mask.empty() || mask[i]) ++n_used;
  require(n_used > 0, "cross_entropy: no unmasked positions");

  const bool rg = want_grad(tape, {&logits});
  Tensor probs = Tensor::zeros({t, v});  // softmax rows, reused by backward
  double total = 0.0;
  {
    auto pl = logits.data();
    auto pp = probs.mutable_data();
    for (int i = 0; i < t; ++i) {
      const double* row = pl.data() + static_cast<std::size_t>(i) * v;
      double* prow = pp.data() + static_cast<std::size_t>(i) * v;
      double mx = row[0];
      for (int j = 1; j < v; ++j) mx = std::max(mx, row[j]);
      double z = 0.0;
      for (int j = 0; j < v; ++j) {
        prow[j] = std::exp(row[j] - mx);
        z += prow[j];
      }
      const double inv = 1.0 / z;
      for (int j = 0; j < v; ++j) prow[j] *= inv;
      if (mask.empty() || mask[i]) total += (std::log(z) + mx) - row[targets[i]];
    }
  }
  Tensor out = Tensor::scalar(total / n_used, rg);
  if (rg) {
    std::vector<int> tg(targets.begin(), targets.end());
    std::vector<std::uint8_t> mk(mask.begin(), mask.end());
    tape.record([logits, out, probs, tg, mk, t, v, n_used]() mutable {
      if (!out.grad_allocated()) return;
      const double g = out.grad()[0] / n_used;
      if (g == 0.0) return;
      auto dl = logits.grad_mut();
      auto pp = probs.data();
      for (int i = 0; i < t; ++i) {
        if (!mk.empty() && !mk[i]) continue;
        const double* prow = pp.data() + static_cast<std::size_t>(i) * v;
        double* grow = dl.data() + static_cast<std::size_t>(i) * v;
        for (int j = 0; j < v; ++j) grow[j] += g * prow[j];
        grow[tg[i]] -= g;
      }
    });
  }
  return out;
}

Tensor cross_entropy(Tape& tape, const Tensor& logits, std::span<const int> targets) {
  return cross_entropy(tape, logits, targets, {});
}

Tensor sum(Tape& tape, const Tensor& x) {
  const bool rg = want_grad(tape, {&x});
  double total = 0.0;
  for (double v : x.data()) total += v;
  Tensor out = Tensor::scalar(total, rg);
  if (rg) {
    tape.record([x, out]() mutable {
      if (!out.grad_allocated()) return;
      const double g = out.grad()[0];
      auto dx = x.grad_mut();
      for (int i = 0; i < x.numel(); ++i) dx[i] += g;
    });
  }
  return out;
}

Tensor concat_cols(Tape& tape, std::span<const Tensor> parts) {
  require(!parts.empty(), "concat_cols: no inputs");
  const int m = parts[0].rows();
  int total = 0;
  bool rg = false;
  for (const Tensor& p : parts) {
    require(p.ndim() == 2 && p.rows() == m, "concat_cols: row counts must match");
    total += p.cols();
    rg = rg || p.requires_grad();
  }
  rg = rg && tape.active();
  Tensor out = Tensor::zeros({m, total}, rg);
  {
    auto dst = out.mutable_data();
    int off = 0;
    for (const Tensor& p : parts) {
      auto src = p.data();
      const int n = p.cols();
      for (int i = 0; i < m; ++i)
        std::copy_n(src.data() + static_cast<std::size_t>(i) * n, n,
                    dst.data() + static_cast<std::size_t>(i) * total + off);
      off += n;
    }
  }
  if (rg) {
    std::vector<Tensor> held(parts.begin(), parts.end());
    tape.record([held, out, m, total]() mutable {
      if (!out.grad_allocated()) return;
      auto dy = out.grad();
      int off = 0;
      for (Tensor& p : held) {
        const int n = p.cols();
        if (p.requires_grad()) {
          auto dp = p.grad_mut();
          for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j)
              dp[static_cast<std::size_t>(i) * n + j] +=
                  dy[static_cast<std::size_t>(i) * total + off + j];
        }
        off += n;
      }
    });
  }
  return out;
}

Tensor concat_rows(Tape& tape, std::span<const Tensor> parts) {
  require(!parts.empty(), "concat_rows: no inputs");
  const int n = parts[0].cols();
  int total = 0;
  bool rg = false;
  for (const Tensor& p : parts) {
    require(p.ndim() == 2 && p.cols() == n, "concat_rows: column counts must match");
    total += p.rows();
    rg = rg || p.requires_grad();
  }
  rg = rg && tape.active();
  Tensor out = Tensor::zeros({total, n}, rg);
  {
    auto dst = out.mutable_data();
    int off = 0;
    for (const Tensor& p : parts) {
      auto src = p.data();
      std::copy_n(src.data(), src.size(), dst.data() + static_cast<std::size_t>(off) * n);
      off += p.rows();
    }
  }
  if (rg) {
    std::vector<Tensor> held(parts.begin(), parts.end());
    tape.record([held, out, n]() mutable {
      if (!out.grad_allocated()) return;
      auto dy = out.grad();
      int off = 0;
      for (Tensor& p : held) {
        if (p.requires_grad()) {
          auto dp = p.grad_mut();
          for (int i = 0; i < p.numel(); ++i)
            dp[i] += dy[static_cast<std::size_t>(off) * n + i];
        }
        off += p.rows();
      }
    });
  }
  return out;
}

bool all_finite(const Tensor& x) {
  for (double v : x.data())
    if (!std::isfinite(v)) return false;
  return true;
}

}  // namespace capgen::ag
