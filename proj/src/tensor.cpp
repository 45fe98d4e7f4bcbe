#include "dc3d/tensor.hpp"

#include <atomic>
#include <cmath>
#include <cstring>
#include <sstream>

namespace dc3d::diff {

namespace {

std::atomic<std::uint64_t> g_next_id{1};

void check_finite(const std::vector<float>& data) {
  for (float v : data) {
    if (!std::isfinite(v)) throw NumericError("tensor contains a non-finite value");
  }
}

}  // namespace

std::int64_t shape_size(const Shape& shape) {
  std::int64_t n = 1;
  for (int d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << "]";
  return os.str();
}

Tensor::Tensor(Shape shape, std::vector<float> data, bool requires_grad) {
  for (int d : shape) {
    if (d <= 0) throw DimensionError("tensor dimensions must be positive, got " + shape_str(shape));
  }
  if (shape_size(shape) != static_cast<std::int64_t>(data.size())) {
    throw DimensionError("shape " + shape_str(shape) + " does not match data length " +
                         std::to_string(data.size()));
  }
  check_finite(data);
  auto payload = std::make_shared<Payload>();
  payload->shape = std::move(shape);
  payload->data = std::move(data);
  payload->requires_grad = requires_grad;
  payload->id = g_next_id.fetch_add(1, std::memory_order_relaxed);
  p_ = std::move(payload);
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  std::vector<float> data(static_cast<std::size_t>(shape_size(shape)), 0.0f);
  return Tensor(std::move(shape), std::move(data), requires_grad);
}

Tensor Tensor::full(Shape shape, float value, bool requires_grad) {
  std::vector<float> data(static_cast<std::size_t>(shape_size(shape)), value);
  return Tensor(std::move(shape), std::move(data), requires_grad);
}

Tensor Tensor::scalar(float value, bool requires_grad) {
  return Tensor({1}, {value}, requires_grad);
}

Tensor Tensor::glorot(int rows, int cols, Rng& rng, bool requires_grad) {
  const double bound = std::sqrt(6.0 / (rows + cols));
  std::vector<float> data(static_cast<std::size_t>(rows) * cols);
  for (auto& v : data) v = static_cast<float>(rng.uniform(-bound, bound));
  return Tensor({rows, cols}, std::move(data), requires_grad);
}

float Tensor::item() const {
  if (size() != 1) throw ArgumentError("item() requires a single-element tensor, got " + shape_str(shape()));
  return p_->data[0];
}

Tensor Tensor::detached() const { return Tensor(p_->shape, p_->data, false); }
Tensor Tensor::with_grad() const { return Tensor(p_->shape, p_->data, true); }

std::vector<float>& GradientMap::slot(std::uint64_t id, std::int64_t size) {
  auto it = grads_.find(id);
  if (it == grads_.end()) {
    it = grads_.emplace(id, std::vector<float>(static_cast<std::size_t>(size), 0.0f)).first;
  }
  return it->second;
}

const std::vector<float>* GradientMap::find(std::uint64_t id) const {
  auto it = grads_.find(id);
  return it == grads_.end() ? nullptr : &it->second;
}

std::vector<float> GradientMap::get(const Tensor& t) const {
  if (const auto* g = find(t.id())) return *g;
  return std::vector<float>(static_cast<std::size_t>(t.size()), 0.0f);
}

void Tape::record(std::function<void(GradientMap&)> backward) {
  ops_.push_back(std::move(backward));
}

GradientMap Tape::backward(const Tensor& loss) const {
  if (!loss.defined() || loss.size() != 1) {
    throw ArgumentError("backward() requires a scalar loss");
  }
  GradientMap grads;
  grads.slot(loss.id(), 1)[0] = 1.0f;
  for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)(grads);
  return grads;
}

namespace {

bool wants_tape(Tape* tape, const Tensor& a) { return tape != nullptr && a.requires_grad(); }
bool wants_tape(Tape* tape, const Tensor& a, const Tensor& b) {
  return tape != nullptr && (a.requires_grad() || (b.defined() && b.requires_grad()));
}

}  // namespace

Tensor matmul(Tape* tape, const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul shapes " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<float> out(static_cast<std::size_t>(m) * n, 0.0f);
  const float* ad = a.data().data();
  const float* bd = b.data().data();
  for (int i = 0; i < m; ++i) {
    for (int p = 0; p < k; ++p) {
      const float aip = ad[i * k + p];
      const float* brow = bd + static_cast<std::size_t>(p) * n;
      float* crow = out.data() + static_cast<std::size_t>(i) * n;
      for (int j = 0; j < n; ++j) crow[j] += aip * brow[j];
    }
  }
  Tensor c({m, n}, std::move(out), a.requires_grad() || b.requires_grad());
  if (wants_tape(tape, a, b)) {
    tape->record([a, b, c, m, k, n](GradientMap& g) {
      const auto* gc = g.find(c.id());
      if (!gc) return;
      if (a.requires_grad()) {
        auto& ga = g.slot(a.id(), a.size());
        const float* bd = b.data().data();
        for (int i = 0; i < m; ++i)
          for (int p = 0; p < k; ++p) {
            float acc = 0.0f;
            const float* gcrow = gc->data() + static_cast<std::size_t>(i) * n;
            const float* brow = bd + static_cast<std::size_t>(p) * n;
            for (int j = 0; j < n; ++j) acc += gcrow[j] * brow[j];
            ga[i * k + p] += acc;
          }
      }
      if (b.requires_grad()) {
        auto& gb = g.slot(b.id(), b.size());
        const float* ad = a.data().data();
        for (int i = 0; i < m; ++i) {
          const float* gcrow = gc->data() + static_cast<std::size_t>(i) * n;
          for (int p = 0; p < k; ++p) {
            const float aip = ad[i * k + p];
            float* gbrow = gb.data() + static_cast<std::size_t>(p) * n;
            for (int j = 0; j < n; ++j) gbrow[j] += aip * gcrow[j];
          }
        }
      }
    });
  }
  return c;
}

Tensor vecmat(Tape* tape, const Tensor& x, const Tensor& w) {
  if (x.rank() != 1 || w.rank() != 2 || x.dim(0) != w.dim(0)) {
    throw DimensionError("vecmat shapes " + shape_str(x.shape()) + " x " + shape_str(w.shape()));
  }
  const int k = w.dim(0), n = w.dim(1);
  std::vector<float> out(static_cast<std::size_t>(n), 0.0f);
  const float* xd = x.data().data();
  const float* wd = w.data().data();
  for (int p = 0; p < k; ++p) {
    const float xp = xd[p];
    const float* wrow = wd + static_cast<std::size_t>(p) * n;
    for (int j = 0; j < n; ++j) out[j] += xp * wrow[j];
  }
  Tensor y({n}, std::move(out), x.requires_grad() || w.requires_grad());
  if (wants_tape(tape, x, w)) {
    tape->record([x, w, y, k, n](GradientMap& g) {
      const auto* gy = g.find(y.id());
      if (!gy) return;
      if (x.requires_grad()) {
        auto& gx = g.slot(x.id(), x.size());
        const float* wd = w.data().data();
        for (int p = 0; p < k; ++p) {
          float acc = 0.0f;
          const float* wrow = wd + static_cast<std::size_t>(p) * n;
          for (int j = 0; j < n; ++j) acc += wrow[j] * (*gy)[j];
          gx[p] += acc;
        }
      }
      if (w.requires_grad()) {
        auto& gw = g.slot(w.id(), w.size());
        const float* xd = x.data().data();
        for (int p = 0; p < k; ++p) {
          const float xp = xd[p];
          float* gwrow = gw.data() + static_cast<std::size_t>(p) * n;
          for (int j = 0; j < n; ++j) gwrow[j] += xp * (*gy)[j];
        }
      }
    });
  }
  return y;
}

namespace {

enum class Broadcast { kNone, kTrailing };

Broadcast binary_broadcast(const Tensor& a, const Tensor& b) {
  if (a.shape() == b.shape()) return Broadcast::kNone;
  if (b.rank() == 1 && a.rank() >= 1 && a.dim(a.rank() - 1) == b.dim(0)) return Broadcast::kTrailing;
  throw DimensionError("elementwise shapes " + shape_str(a.shape()) + " vs " + shape_str(b.shape()) +
                       " are not broadcastable");
}

}  // namespace

Tensor elementwise(Tape* tape, Elementwise kind, const Tensor& a, const Tensor& b) {
  const bool binary = kind == Elementwise::kAdd || kind == Elementwise::kSub || kind == Elementwise::kMul;
  if (binary && !b.defined()) throw ArgumentError("binary elementwise op requires two tensors");
  if (!binary && b.defined()) throw ArgumentError("unary elementwise op takes one tensor");

  const std::size_t total = static_cast<std::size_t>(a.size());
  std::vector<float> out(total);
  const float* ad = a.data().data();

  if (binary) {
    const Broadcast bc = binary_broadcast(a, b);
    const float* bd = b.data().data();
    const std::size_t bn = static_cast<std::size_t>(b.size());
    for (std::size_t i = 0; i < total; ++i) {
      const float bv = bc == Broadcast::kNone ? bd[i] : bd[i % bn];
      switch (kind) {
        case Elementwise::kAdd: out[i] = ad[i] + bv; break;
        case Elementwise::kSub: out[i] = ad[i] - bv; break;
        default: out[i] = ad[i] * bv; break;
      }
    }
    Tensor y(a.shape(), std::move(out), a.requires_grad() || b.requires_grad());
    if (wants_tape(tape, a, b)) {
      tape->record([kind, a, b, y, bc, total, bn](GradientMap& g) {
        const auto* gy = g.find(y.id());
        if (!gy) return;
        const float* ad = a.data().data();
        const float* bd = b.data().data();
        if (a.requires_grad()) {
          auto& ga = g.slot(a.id(), a.size());
          for (std::size_t i = 0; i < total; ++i) {
            const float bv = bc == Broadcast::kNone ? bd[i] : bd[i % bn];
            switch (kind) {
              case Elementwise::kAdd:
              case Elementwise::kSub: ga[i] += (*gy)[i]; break;
              default: ga[i] += (*gy)[i] * bv; break;
            }
          }
        }
        if (b.requires_grad()) {
          auto& gb = g.slot(b.id(), b.size());
          for (std::size_t i = 0; i < total; ++i) {
            const std::size_t bi = bc == Broadcast::kNone ? i : i % bn;
            switch (kind) {
              case Elementwise::kAdd: gb[bi] += (*gy)[i]; break;
              case Elementwise::kSub: gb[bi] -= (*gy)[i]; break;
              default: gb[bi] += (*gy)[i] * ad[i]; break;
            }
          }
        }
      });
    }
    return y;
  }

  for (std::size_t i = 0; i < total; ++i) {
    switch (kind) {
      case Elementwise::kRelu: out[i] = ad[i] > 0.0f ? ad[i] : 0.0f; break;
      case Elementwise::kSigmoid: out[i] = 1.0f / (1.0f + std::exp(-ad[i])); break;
      default: out[i] = std::tanh(ad[i]); break;
    }
  }
  Tensor y(a.shape(), std::move(out), a.requires_grad());
  if (wants_tape(tape, a)) {
    tape->record([kind, a, y, total](GradientMap& g) {
      const auto* gy = g.find(y.id());
      if (!gy) return;
      auto& ga = g.slot(a.id(), a.size());
      const float* ad = a.data().data();
      const float* yd = y.data().data();
      for (std::size_t i = 0; i < total; ++i) {
        float local;
        switch (kind) {
          case Elementwise::kRelu: local = ad[i] > 0.0f ? 1.0f : 0.0f; break;
          case Elementwise::kSigmoid: local = yd[i] * (1.0f - yd[i]); break;
          default: local = 1.0f - yd[i] * yd[i]; break;
        }
        ga[i] += (*gy)[i] * local;
      }
    });
  }
  return y;
}

Tensor add(Tape* tape, const Tensor& a, const Tensor& b) { return elementwise(tape, Elementwise::kAdd, a, b); }
Tensor sub(Tape* tape, const Tensor& a, const Tensor& b) { return elementwise(tape, Elementwise::kSub, a, b); }
Tensor mul(Tape* tape, const Tensor& a, const Tensor& b) { return elementwise(tape, Elementwise::kMul, a, b); }
Tensor relu(Tape* tape, const Tensor& a) { return elementwise(tape, Elementwise::kRelu, a); }
Tensor sigmoid(Tape* tape, const Tensor& a) { return elementwise(tape, Elementwise::kSigmoid, a); }
Tensor tanh(Tape* tape, const Tensor& a) { return elementwise(tape, Elementwise::kTanh, a); }

Tensor concat(Tape* tape, const std::vector<Tensor>& parts, int axis) {
  if (parts.empty()) throw ArgumentError("concat of an empty part list");
  const int rank = parts.front().rank();
  if (axis < 0 || axis >= rank) throw ArgumentError("concat axis out of range");
  Shape out_shape = parts.front().shape();
  bool any_grad = false;
  for (const auto& p : parts) {
    if (p.rank() != rank) throw DimensionError("concat parts disagree on rank");
    for (int d = 0; d < rank; ++d) {
      if (d != axis && p.dim(d) != out_shape[static_cast<std::size_t>(d)]) {
        throw DimensionError("concat parts disagree on non-concat axis " + std::to_string(d));
      }
    }
    any_grad = any_grad || p.requires_grad();
  }
  out_shape[static_cast<std::size_t>(axis)] = 0;
  for (const auto& p : parts) out_shape[static_cast<std::size_t>(axis)] += p.dim(axis);

  std::int64_t outer = 1, inner = 1;
  for (int d = 0; d < axis; ++d) outer *= out_shape[static_cast<std::size_t>(d)];
  for (int d = axis + 1; d < rank; ++d) inner *= out_shape[static_cast<std::size_t>(d)];
  const std::int64_t out_axis = out_shape[static_cast<std::size_t>(axis)];

  std::vector<float> out(static_cast<std::size_t>(shape_size(out_shape)));
  std::int64_t offset = 0;
  for (const auto& p : parts) {
    const std::int64_t p_axis = p.dim(axis);
    const float* pd = p.data().data();
    for (std::int64_t o = 0; o < outer; ++o) {
      const float* src = pd + o * p_axis * inner;
      float* dst = out.data() + (o * out_axis + offset) * inner;
      std::memcpy(dst, src, static_cast<std::size_t>(p_axis * inner) * sizeof(float));
    }
    offset += p_axis;
  }
  Tensor y(out_shape, std::move(out), any_grad);
  if (tape && any_grad) {
    tape->record([parts, y, axis, outer, inner, out_axis](GradientMap& g) {
      const auto* gy = g.find(y.id());
      if (!gy) return;
      std::int64_t offset = 0;
      for (const auto& p : parts) {
        const std::int64_t p_axis = p.dim(axis);
        if (p.requires_grad()) {
          auto& gp = g.slot(p.id(), p.size());
          for (std::int64_t o = 0; o < outer; ++o) {
            const float* src = gy->data() + (o * out_axis + offset) * inner;
            float* dst = gp.data() + o * p_axis * inner;
            for (std::int64_t i = 0; i < p_axis * inner; ++i) dst[i] += src[i];
          }
        }
        offset += p_axis;
      }
    });
  }
  return y;
}

Tensor stack_rows(Tape* tape, const std::vector<Tensor>& rows) {
  if (rows.empty()) throw ArgumentError("stack_rows of an empty row list");
  const int n = rows.front().dim(0);
  bool any_grad = false;
  for (const auto& r : rows) {
    if (r.rank() != 1 || r.dim(0) != n) {
      throw DimensionError("stack_rows requires equal-length vectors");
    }
    any_grad = any_grad || r.requires_grad();
  }
  const int m = static_cast<int>(rows.size());
  std::vector<float> out(static_cast<std::size_t>(m) * n);
  for (int i = 0; i < m; ++i) {
    std::memcpy(out.data() + static_cast<std::size_t>(i) * n, rows[static_cast<std::size_t>(i)].data().data(),
                static_cast<std::size_t>(n) * sizeof(float));
  }
  Tensor y({m, n}, std::move(out), any_grad);
  if (tape && any_grad) {
    tape->record([rows, y, m, n](GradientMap& g) {
      const auto* gy = g.find(y.id());
      if (!gy) return;
      for (int i = 0; i < m; ++i) {
        const auto& r = rows[static_cast<std::size_t>(i)];
        if (!r.requires_grad()) continue;
        auto& gr = g.slot(r.id(), r.size());
        const float* src = gy->data() + static_cast<std::size_t>(i) * n;
        for (int j = 0; j < n; ++j) gr[j] += src[j];
      }
    });
  }
  return y;
}

Tensor row(Tape* tape, const Tensor& m, int i) {
  if (m.rank() != 2) throw DimensionError("row() requires a matrix");
  if (i < 0 || i >= m.dim(0)) throw ArgumentError("row index out of range");
  const int n = m.dim(1);
  std::vector<float> out(m.data().begin() + static_cast<std::size_t>(i) * n,
                         m.data().begin() + static_cast<std::size_t>(i + 1) * n);
  Tensor y({n}, std::move(out), m.requires_grad());
  if (wants_tape(tape, m)) {
    tape->record([m, y, i, n](GradientMap& g) {
      const auto* gy = g.find(y.id());
      if (!gy) return;
      auto& gm = g.slot(m.id(), m.size());
      float* dst = gm.data() + static_cast<std::size_t>(i) * n;
      for (int j = 0; j < n; ++j) dst[j] += (*gy)[j];
    });
  }
  return y;
}

Tensor reshape(Tape* tape, const Tensor& x, Shape shape) {
  if (shape_size(shape) != x.size()) {
    throw DimensionError("reshape to " + shape_str(shape) + " changes element count");
  }
  Tensor y(std::move(shape), x.data(), x.requires_grad());
  if (wants_tape(tape, x)) {
    tape->record([x, y](GradientMap& g) {
      const auto* gy = g.find(y.id());
      if (!gy) return;
      auto& gx = g.slot(x.id(), x.size());
      for (std::size_t i = 0; i < gy->size(); ++i) gx[i] += (*gy)[i];
    });
  }
  return y;
}

Tensor transpose(Tape* tape, const Tensor& m) {
  if (m.rank() != 2) throw DimensionError("transpose requires a matrix");
  const int r = m.dim(0), c = m.dim(1);
  std::vector<float> out(static_cast<std::size_t>(r) * c);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) out[static_cast<std::size_t>(j) * r + i] = m.at(static_cast<std::int64_t>(i) * c + j);
  Tensor y({c, r}, std::move(out), m.requires_grad());
  if (wants_tape(tape, m)) {
    tape->record([m, y, r, c](GradientMap& g) {
      const auto* gy = g.find(y.id());
      if (!gy) return;
      auto& gm = g.slot(m.id(), m.size());
      for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j) gm[static_cast<std::size_t>(i) * c + j] += (*gy)[static_cast<std::size_t>(j) * r + i];
    });
  }
  return y;
}

Tensor scale(Tape* tape, const Tensor& x, float c) {
  std::vector<float> out(x.data());
  for (auto& v : out) v *= c;
  Tensor y(x.shape(), std::move(out), x.requires_grad());
  if (wants_tape(tape, x)) {
    tape->record([x, y, c](GradientMap& g) {
      const auto* gy = g.find(y.id());
      if (!gy) return;
      auto& gx = g.slot(x.id(), x.size());
      for (std::size_t i = 0; i < gy->size(); ++i) gx[i] += c * (*gy)[i];
    });
  }
  return y;
}

Tensor sum(Tape* tape, const Tensor& x) {
  float acc = 0.0f;
  for (float v : x.data()) acc += v;
  Tensor y({1}, {acc}, x.requires_grad());
  if (wants_tape(tape, x)) {
    tape->record([x, y](GradientMap& g) {
      const auto* gy = g.find(y.id());
      if (!gy) return;
      auto& gx = g.slot(x.id(), x.size());
      for (auto& v : gx) v += (*gy)[0];
    });
  }
  return y;
}

Tensor softmax(Tape* tape, const Tensor& x, int axis) {
  if (axis < 0 || axis >= x.rank()) throw ArgumentError("softmax axis out of range");
  const int rank = x.rank();
  std::int64_t outer = 1, inner = 1;
  for (int d = 0; d < axis; ++d) outer *= x.dim(d);
  for (int d = axis + 1; d < rank; ++d) inner *= x.dim(d);
  const std::int64_t L = x.dim(axis);

  std::vector<float> out(static_cast<std::size_t>(x.size()));
  const float* xd = x.data().data();
  for (std::int64_t o = 0; o < outer; ++o) {
    for (std::int64_t in = 0; in < inner; ++in) {
      const std::int64_t base = o * L * inner + in;
      float mx = xd[base];
      for (std::int64_t l = 1; l < L; ++l) mx = std::max(mx, xd[base + l * inner]);
      double denom = 0.0;
      for (std::int64_t l = 0; l < L; ++l) denom += std::exp(static_cast<double>(xd[base + l * inner] - mx));
      for (std::int64_t l = 0; l < L; ++l) {
        out[static_cast<std::size_t>(base + l * inner)] =
            static_cast<float>(std::exp(static_cast<double>(xd[base + l * inner] - mx)) / denom);
      }
    }
  }
  Tensor y(x.shape(), std::move(out), x.requires_grad());
  if (wants_tape(tape, x)) {
    tape->record([x, y, outer, inner, L](GradientMap& g) {
      const auto* gy = g.find(y.id());
      if (!gy) return;
      auto& gx = g.slot(x.id(), x.size());
      const float* yd = y.data().data();
      for (std::int64_t o = 0; o < outer; ++o) {
        for (std::int64_t in = 0; in < inner; ++in) {
          const std::int64_t base = o * L * inner + in;
          double dot = 0.0;
          for (std::int64_t l = 0; l < L; ++l) {
            const std::size_t i = static_cast<std::size_t>(base + l * inner);
            dot += static_cast<double>((*gy)[i]) * yd[i];
          }
          for (std::int64_t l = 0; l < L; ++l) {
            const std::size_t i = static_cast<std::size_t>(base + l * inner);
            gx[i] += yd[i] * ((*gy)[i] - static_cast<float>(dot));
          }
        }
      }
    });
  }
  return y;
}

Tensor cross_entropy(Tape* tape, const Tensor& logits, int target) {
  if (logits.rank() != 1) throw DimensionError("cross_entropy expects a 1-d logit vector");
  const int v = logits.dim(0);
  if (target < 0 || target >= v) throw ArgumentError("cross_entropy target out of range");
  const float* ld = logits.data().data();
  float mx = ld[0];
  for (int i = 1; i < v; ++i) mx = std::max(mx, ld[i]);
  double denom = 0.0;
  for (int i = 0; i < v; ++i) denom += std::exp(static_cast<double>(ld[i] - mx));
  const double lse = static_cast<double>(mx) + std::log(denom);
  Tensor y({1}, {static_cast<float>(lse - ld[target])}, logits.requires_grad());
  if (wants_tape(tape, logits)) {
    tape->record([logits, y, target, v, mx, denom](GradientMap& g) {
      const auto* gy = g.find(y.id());
      if (!gy) return;
      auto& gl = g.slot(logits.id(), logits.size());
      const float* ld = logits.data().data();
      for (int i = 0; i < v; ++i) {
        const float p = static_cast<float>(std::exp(static_cast<double>(ld[i] - mx)) / denom);
        gl[i] += (*gy)[0] * (p - (i == target ? 1.0f : 0.0f));
      }
    });
  }
  return y;
}

GruParams make_gru_params(int input_dim, int hidden_dim, Rng& rng) {
  GruParams p;
  p.w_update = Tensor::glorot(input_dim, hidden_dim, rng);
  p.u_update = Tensor::glorot(hidden_dim, hidden_dim, rng);
  p.b_update = Tensor::zeros({hidden_dim}, true);
  p.w_reset = Tensor::glorot(input_dim, hidden_dim, rng);
  p.u_reset = Tensor::glorot(hidden_dim, hidden_dim, rng);
  p.b_reset = Tensor::zeros({hidden_dim}, true);
  p.w_cand = Tensor::glorot(input_dim, hidden_dim, rng);
  p.u_cand = Tensor::glorot(hidden_dim, hidden_dim, rng);
  p.b_cand = Tensor::zeros({hidden_dim}, true);
  return p;
}

Tensor gru_cell(Tape* tape, const Tensor& x, const Tensor& h_prev, const GruParams& p) {
  if (x.rank() != 1 || h_prev.rank() != 1) throw DimensionError("gru_cell expects 1-d input and state");
  const int d_in = x.dim(0), d_h = h_prev.dim(0);
  auto check = [&](const Tensor& t, int r, int c, const char* name) {
    if (t.rank() != 2 || t.dim(0) != r || t.dim(1) != c) {
      throw DimensionError(std::string("gru_cell parameter ") + name + " has shape " + shape_str(t.shape()));
    }
  };
  check(p.w_update, d_in, d_h, "w_update");
  check(p.u_update, d_h, d_h, "u_update");
  check(p.w_reset, d_in, d_h, "w_reset");
  check(p.u_reset, d_h, d_h, "u_reset");
  check(p.w_cand, d_in, d_h, "w_cand");
  check(p.u_cand, d_h, d_h, "u_cand");
  if (p.b_update.size() != d_h || p.b_reset.size() != d_h || p.b_cand.size() != d_h) {
    throw DimensionError("gru_cell bias size mismatch");
  }

  Tensor z = sigmoid(tape, add(tape, add(tape, vecmat(tape, x, p.w_update), vecmat(tape, h_prev, p.u_update)), p.b_update));
  Tensor r = sigmoid(tape, add(tape, add(tape, vecmat(tape, x, p.w_reset), vecmat(tape, h_prev, p.u_reset)), p.b_reset));
  Tensor h_cand = tanh(
      tape, add(tape, add(tape, vecmat(tape, x, p.w_cand), vecmat(tape, mul(tape, r, h_prev), p.u_cand)), p.b_cand));
  Tensor keep = mul(tape, z, h_prev);
  Tensor one_minus_z = sub(tape, Tensor::full({d_h}, 1.0f), z);
  return add(tape, keep, mul(tape, one_minus_z, h_cand));
}

void adam_step(const std::vector<Tensor*>& params, const GradientMap& grads, AdamState& state,
               const AdamConfig& cfg) {
  if (cfg.lr <= 0.0f) throw ArgumentError("adam learning rate must be positive");
  if (state.m_.empty()) {
    state.m_.resize(params.size());
    state.v_.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
      state.m_[i].assign(static_cast<std::size_t>(params[i]->size()), 0.0f);
      state.v_[i].assign(static_cast<std::size_t>(params[i]->size()), 0.0f);
    }
  }
  if (state.m_.size() != params.size()) throw DimensionError("adam state does not match parameter list");
  state.t_ += 1;
  const double bc1 = 1.0 - std::pow(static_cast<double>(cfg.beta1), static_cast<double>(state.t_));
  const double bc2 = 1.0 - std::pow(static_cast<double>(cfg.beta2), static_cast<double>(state.t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& param = *params[i];
    auto& m = state.m_[i];
    auto& v = state.v_[i];
    if (m.size() != static_cast<std::size_t>(param.size())) {
      throw DimensionError("adam moment buffer does not match parameter shape");
    }
    const std::vector<float>* grad = grads.find(param.id());
    if (grad && grad->size() != static_cast<std::size_t>(param.size())) {
      throw DimensionError("gradient shape does not match parameter");
    }
    std::vector<float> updated(param.data());
    for (std::size_t j = 0; j < updated.size(); ++j) {
      float gj = grad ? (*grad)[j] : 0.0f;
      gj += cfg.weight_decay * updated[j];
      m[j] = cfg.beta1 * m[j] + (1.0f - cfg.beta1) * gj;
      v[j] = cfg.beta2 * v[j] + (1.0f - cfg.beta2) * gj * gj;
      const float m_hat = static_cast<float>(m[j] / bc1);
      const float v_hat = static_cast<float>(v[j] / bc2);
      updated[j] -= cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
    }
    param = Tensor(param.shape(), std::move(updated), true);
  }
}

double gradient_check(const TensorFn& f, const std::vector<Tensor>& params, double eps,
                      int coords_per_param, std::uint64_t seed, double scale_floor) {
  Tape tape;
  Tensor loss = f(tape, params);
  GradientMap grads = tape.backward(loss);

  double max_rel = 0.0;
  Rng rng(seed ^ 0x5bd1e995u);
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    const Tensor& p = params[pi];
    if (!p.requires_grad()) continue;
    const std::vector<float> analytic = grads.get(p);

    std::vector<std::int64_t> coords;
    if (coords_per_param <= 0 || coords_per_param >= p.size()) {
      coords.resize(static_cast<std::size_t>(p.size()));
      for (std::int64_t i = 0; i < p.size(); ++i) coords[static_cast<std::size_t>(i)] = i;
    } else {
      for (int c = 0; c < coords_per_param; ++c) {
        coords.push_back(static_cast<std::int64_t>(rng.uniform_int(static_cast<std::uint64_t>(p.size()))));
      }
    }

    for (std::int64_t ci : coords) {
      // The perturbed coordinate rounds to a float, so the difference
      // quotient divides by the perturbation that actually happened.
      auto eval_at = [&](double delta, double* realized) {
        std::vector<float> bumped(p.data());
        const float original = bumped[static_cast<std::size_t>(ci)];
        bumped[static_cast<std::size_t>(ci)] = static_cast<float>(original + delta);
        *realized = static_cast<double>(bumped[static_cast<std::size_t>(ci)]);
        std::vector<Tensor> probe(params);
        probe[pi] = Tensor(p.shape(), std::move(bumped), true);
        Tape scratch;
        return static_cast<double>(f(scratch, probe).item());
      };
      double hi = 0.0, lo = 0.0;
      const double f_hi = eval_at(eps, &hi);
      const double f_lo = eval_at(-eps, &lo);
      const double fd = (f_hi - f_lo) / (hi - lo);
      const double a = static_cast<double>(analytic[static_cast<std::size_t>(ci)]);
      const double denom = std::max({1e-6, std::abs(a) + std::abs(fd), scale_floor});
      max_rel = std::max(max_rel, std::abs(a - fd) / denom);
    }
  }
  return max_rel;
}

}  // namespace dc3d::diff
