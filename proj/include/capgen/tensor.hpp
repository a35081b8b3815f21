#pragma once

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "capgen/rng.hpp"

namespace capgen::ag {

// Dense row-major tensor of 64-bit floats with an optional gradient buffer.
// Values are immutable after creation except the grad buffer; mutable_data()
// exists for parameter initialization and optimizer updates between passes.
class Tensor {
 public:
  Tensor() = default;
  Tensor(std::vector<int> shape, std::vector<double> data, bool requires_grad = false);

  static Tensor zeros(std::vector<int> shape, bool requires_grad = false);
  static Tensor full(std::vector<int> shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor vec(std::vector<double> values, bool requires_grad = false);
  static Tensor from_rows(std::initializer_list<std::initializer_list<double>> rows,
                          bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const std::vector<int>& shape() const;
  int ndim() const;
  int numel() const;
  int rows() const;  // rank-2 only
  int cols() const;  // rank-2 only
  bool requires_grad() const;

  std::span<const double> data() const;
  std::span<double> mutable_data();
  double item() const;  // numel() == 1
  double at(int r, int c) const;

  // Grad buffers are the one part of a tensor that stays mutable after
  // creation, so they are reachable through const handles.
  bool grad_allocated() const;
  std::span<const double> grad() const;  // allocates zeros on demand
  std::span<double> grad_mut() const;
  void zero_grad() const;

  // Identity of the underlying buffer; two handles to one tensor compare equal.
  bool same_as(const Tensor& other) const { return impl_ == other.impl_; }

 private:
  struct Impl {
    std::vector<int> shape;
    std::vector<double> data;
    mutable std::vector<double> grad;  // lazily sized to data.size()
    bool requires_grad = false;
  };
  std::shared_ptr<Impl> impl_;
  void ensure_grad() const;
};

// Records one backward closure per forward op, in execution order. Reverse
// traversal is a valid reverse-topological order because ops are recorded
// after their inputs exist (define-by-run). A tape and its tensors belong to
// one thread for the duration of a forward/backward pass.
class Tape {
 public:
  Tape() = default;
  static Tape disabled();

  bool active() const { return active_; }
  void record(std::function<void()> backward_fn);
  std::size_t size() const { return entries_.size(); }
  void clear() { entries_.clear(); }

  // Seeds d(loss)/d(loss) = 1 and runs every recorded rule once, in reverse.
  // Gradients accumulate additively; callers zero grads between steps.
  void backward(const Tensor& loss);

 private:
  explicit Tape(bool active) : active_(active) {}
  bool active_ = true;
  std::vector<std::function<void()>> entries_;
};

// ---- differentiable ops ----

Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b);
Tensor transpose(Tape& tape, const Tensor& x);
// Same-shape add, or broadcast of a bias row ([n] or [1,n]) over the rows
// of a matrix.
Tensor add(Tape& tape, const Tensor& a, const Tensor& b);
Tensor mul(Tape& tape, const Tensor& a, const Tensor& b);  // elementwise
Tensor scale(Tape& tape, const Tensor& x, double s);
Tensor relu(Tape& tape, const Tensor& x);
Tensor sigmoid(Tape& tape, const Tensor& x);
Tensor tanh_op(Tape& tape, const Tensor& x);
Tensor softmax_rows(Tape& tape, const Tensor& x);
Tensor layer_norm(Tape& tape, const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps);
Tensor embedding_lookup(Tape& tape, const Tensor& table, std::span<const int> ids);
Tensor dropout(Tape& tape, const Tensor& x, double p, bool training, Rng& rng);
// Mean over masked-in positions of -log softmax(logits)[t, target[t]].
// mask entries: 1 = count the position, 0 = ignore (padding).
Tensor cross_entropy(Tape& tape, const Tensor& logits, std::span<const int> targets,
                     std::span<const std::uint8_t> mask);
Tensor cross_entropy(Tape& tape, const Tensor& logits, std::span<const int> targets);
Tensor sum(Tape& tape, const Tensor& x);
Tensor concat_cols(Tape& tape, std::span<const Tensor> parts);
Tensor concat_rows(Tape& tape, std::span<const Tensor> parts);

bool all_finite(const Tensor& x);

}  // namespace capgen::ag
