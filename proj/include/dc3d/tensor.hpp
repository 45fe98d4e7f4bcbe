#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "dc3d/error.hpp"
#include "dc3d/rng.hpp"

namespace dc3d::diff {

using Shape = std::vector<int>;

std::int64_t shape_size(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Immutable dense array of 32-bit reals in row-major order. Copies are
/// cheap (shared payload). Every constructed tensor is checked to be finite;
/// a NaN/Inf anywhere raises NumericError.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<float> data, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, float value, bool requires_grad = false);
  static Tensor scalar(float value, bool requires_grad = false);
  /// Matrix with entries uniform in +-sqrt(6/(fan_in+fan_out)); the init used
  /// for every weight matrix in this project.
  static Tensor glorot(int rows, int cols, Rng& rng, bool requires_grad = true);

  bool defined() const { return static_cast<bool>(p_); }
  const Shape& shape() const { return p_->shape; }
  int rank() const { return static_cast<int>(p_->shape.size()); }
  int dim(int axis) const { return p_->shape[static_cast<std::size_t>(axis)]; }
  std::int64_t size() const { return static_cast<std::int64_t>(p_->data.size()); }
  const std::vector<float>& data() const { return p_->data; }
  bool requires_grad() const { return p_->requires_grad; }
  std::uint64_t id() const { return p_->id; }

  /// Value of a single-element tensor.
  float item() const;
  float at(std::int64_t flat_index) const { return p_->data[static_cast<std::size_t>(flat_index)]; }

  /// Same data with the gradient flag changed (fresh identity).
  Tensor detached() const;
  Tensor with_grad() const;

 private:
  struct Payload {
    Shape shape;
    std::vector<float> data;
    bool requires_grad = false;
    std::uint64_t id = 0;
  };
  std::shared_ptr<const Payload> p_;
};

/// Gradient buffers keyed by tensor identity. A missing entry reads as an
/// all-zero gradient.
class GradientMap {
 public:
  std::vector<float>& slot(std::uint64_t id, std::int64_t size);
  const std::vector<float>* find(std::uint64_t id) const;
  /// Gradient for `t`, zero-filled when `t` never appeared on the tape.
  std::vector<float> get(const Tensor& t) const;

 private:
  std::unordered_map<std::uint64_t, std::vector<float>> grads_;
};

/// Ordered record of executed ops. Replaying the record backward visits ops
/// in exact reverse execution order; gradients for a tensor used several
/// times accumulate by summation.
class Tape {
 public:
  void record(std::function<void(GradientMap&)> backward);
  /// Reverse-mode sweep from a scalar loss. Non-scalar loss -> ArgumentError.
  GradientMap backward(const Tensor& loss) const;
  std::size_t op_count() const { return ops_.size(); }

 private:
  std::vector<std::function<void(GradientMap&)>> ops_;
};

enum class Elementwise { kAdd, kSub, kMul, kRelu, kSigmoid, kTanh };

// All ops record onto `tape` when it is non-null and some input requires a
// gradient. Passing a null tape runs plain forward arithmetic.

/// [m,k] x [k,n] -> [m,n].
Tensor matmul(Tape* tape, const Tensor& a, const Tensor& b);
/// [k] x [k,n] -> [n].
Tensor vecmat(Tape* tape, const Tensor& x, const Tensor& w);
/// Entrywise op. Binary kinds accept equal shapes or a 1-d `b` matching the
/// trailing dimension of `a` (broadcast across rows).
Tensor elementwise(Tape* tape, Elementwise kind, const Tensor& a, const Tensor& b = {});

Tensor add(Tape* tape, const Tensor& a, const Tensor& b);
Tensor sub(Tape* tape, const Tensor& a, const Tensor& b);
Tensor mul(Tape* tape, const Tensor& a, const Tensor& b);
Tensor relu(Tape* tape, const Tensor& a);
Tensor sigmoid(Tape* tape, const Tensor& a);
Tensor tanh(Tape* tape, const Tensor& a);

Tensor concat(Tape* tape, const std::vector<Tensor>& parts, int axis);
/// k vectors of length n -> [k,n].
Tensor stack_rows(Tape* tape, const std::vector<Tensor>& rows);
/// Row i of [m,n] -> [n].
Tensor row(Tape* tape, const Tensor& m, int i);
Tensor reshape(Tape* tape, const Tensor& x, Shape shape);
Tensor transpose(Tape* tape, const Tensor& m);
Tensor scale(Tape* tape, const Tensor& x, float c);
/// Sum of all entries -> [1].
Tensor sum(Tape* tape, const Tensor& x);
/// Max-subtracted softmax along `axis`.
Tensor softmax(Tape* tape, const Tensor& x, int axis);
/// -log softmax(logits)[target] for a 1-d logit vector.
Tensor cross_entropy(Tape* tape, const Tensor& logits, int target);

/// Gated recurrent cell parameters. Inputs enter through w_*, the previous
/// hidden state through u_*.
struct GruParams {
  Tensor w_update, u_update, b_update;
  Tensor w_reset, u_reset, b_reset;
  Tensor w_cand, u_cand, b_cand;
};

GruParams make_gru_params(int input_dim, int hidden_dim, Rng& rng);

/// h' = z*h_prev + (1-z)*htilde with z the carry gate and the reset gate
/// applied to h_prev inside the candidate.
Tensor gru_cell(Tape* tape, const Tensor& x, const Tensor& h_prev, const GruParams& p);

struct AdamConfig {
  float lr = 1e-3f;
  float weight_decay = 1e-5f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float epsilon = 1e-8f;
};

/// First/second moment buffers, one pair per parameter slot, plus the shared
/// step counter. Buffers are sized on first use and must shape-match their
/// parameters afterwards.
class AdamState {
 public:
  std::int64_t step_count() const { return t_; }
  std::size_t slot_count() const { return m_.size(); }
  const std::vector<float>& first_moment(std::size_t i) const { return m_[i]; }
  const std::vector<float>& second_moment(std::size_t i) const { return v_[i]; }

  static AdamState restore(std::vector<std::vector<float>> m, std::vector<std::vector<float>> v,
                           std::int64_t t) {
    AdamState s;
    s.m_ = std::move(m);
    s.v_ = std::move(v);
    s.t_ = t;
    return s;
  }

 private:
  friend void adam_step(const std::vector<Tensor*>&, const GradientMap&, AdamState&,
                        const AdamConfig&);
  std::vector<std::vector<float>> m_, v_;
  std::int64_t t_ = 0;
};

/// One Adam update over the parameter slots. Weight decay is classic L2
/// added to the gradient before the moment updates.
void adam_step(const std::vector<Tensor*>& params, const GradientMap& grads, AdamState& state,
               const AdamConfig& cfg);

/// Scalar-valued function of a parameter list, recording onto the given tape.
using TensorFn = std::function<Tensor(Tape&, const std::vector<Tensor>&)>;

/// Compares reverse-mode gradients of `f` against central finite differences
/// (f(p+eps)-f(p-eps))/(2 eps) per coordinate and returns the max relative
/// error |a-d| / max(1e-6, |a|+|d|, scale_floor). `coords_per_param` > 0
/// checks that many deterministically sampled coordinates per parameter
/// instead of all. `scale_floor` sets the gradient magnitude below which
/// errors are measured against the floor instead of the coordinate itself;
/// 32-bit loss evaluation puts the difference-quotient noise near 1e-5, so
/// checks over losses of unit scale use a floor of about 1e-2.
double gradient_check(const TensorFn& f, const std::vector<Tensor>& params, double eps,
                      int coords_per_param = 0, std::uint64_t seed = 0, double scale_floor = 0.0);

}  // namespace dc3d::diff
