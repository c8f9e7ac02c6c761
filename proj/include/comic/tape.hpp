#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "comic/errors.hpp"
#include "comic/rng.hpp"
#include "comic/tensor.hpp"

namespace comic {

template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;
  bool decay = true;  // participates in the L2 weight penalty

  Parameter() = default;
  Parameter(std::string n, Tensor<T> v, bool d = true)
      : name(std::move(n)), value(std::move(v)), decay(d) {
    grad = Tensor<T>::zeros(value.shape);
  }

  void zero_grad() { std::fill(grad.data.begin(), grad.data.end(), T(0)); }
};

// Ordered, name-addressable collection of parameters. Deque keeps element
// addresses stable while the set grows.
template <typename T>
struct ParameterSet {
  std::deque<Parameter<T>> items;

  Parameter<T>& add(std::string name, Tensor<T> value, bool decay = true) {
    if (find(name) != nullptr) throw config_error("duplicate parameter name: " + name);
    items.emplace_back(std::move(name), std::move(value), decay);
    return items.back();
  }

  Parameter<T>* find(const std::string& name) {
    for (auto& p : items)
      if (p.name == name) return &p;
    return nullptr;
  }
  const Parameter<T>* find(const std::string& name) const {
    for (const auto& p : items)
      if (p.name == name) return &p;
    return nullptr;
  }

  Parameter<T>& at(const std::string& name) {
    auto* p = find(name);
    if (!p) throw config_error("no parameter named " + name);
    return *p;
  }
  const Parameter<T>& at(const std::string& name) const {
    auto* p = find(name);
    if (!p) throw config_error("no parameter named " + name);
    return *p;
  }

  std::size_t total_elements() const {
    std::size_t n = 0;
    for (const auto& p : items) n += p.value.numel();
    return n;
  }

  void zero_grads() {
    for (auto& p : items) p.zero_grad();
  }

  template <typename U>
  ParameterSet<U> cast() const {
    ParameterSet<U> out;
    for (const auto& p : items) out.add(p.name, p.value.template cast<U>(), p.decay);
    return out;
  }
};

// Reverse-mode tape over dense tensors. Nodes are appended in forward order;
// backward walks ids in reverse, so inputs always precede consumers.
// A tape is single-threaded; parameters must stay frozen while it is alive.
template <typename T>
class Tape {
 public:
  using Id = int;

  // Finite checks after every op; on by default in debug builds.
#ifdef NDEBUG
  bool check_finite = false;
#else
  bool check_finite = true;
#endif

  Id input(Tensor<T> value) { return push(std::move(value), {}, nullptr, "input"); }

  Id param(Parameter<T>& p) {
    auto it = param_nodes_.find(&p);
    if (it != param_nodes_.end()) return it->second;
    Id id = push(p.value, {}, nullptr, "param");
    nodes_[id].param = &p;
    nodes_[id].needs_grad = true;
    param_nodes_[&p] = id;
    return id;
  }

  const Tensor<T>& value(Id id) const { return nodes_.at(id).value; }
  const Tensor<T>& grad(Id id) const { return nodes_.at(id).grad; }

  // ---- ops -------------------------------------------------------------

  Id matmul(Id a, Id b, bool ta = false, bool tb = false) {
    const auto& A = val(a);
    const auto& B = val(b);
    if (A.rank() != 2 || B.rank() != 2)
      throw std::invalid_argument("matmul: rank-2 required, got " + shape_str(A.shape) + " and " +
                                  shape_str(B.shape));
    std::size_t ar = ta ? A.dim(1) : A.dim(0), ac = ta ? A.dim(0) : A.dim(1);
    std::size_t br = tb ? B.dim(1) : B.dim(0), bc = tb ? B.dim(0) : B.dim(1);
    if (ac != br)
      throw std::invalid_argument("matmul: inner dims differ, " + shape_str(A.shape) +
                                  (ta ? "^T" : "") + " x " + shape_str(B.shape) + (tb ? "^T" : ""));
    Tensor<T> out = mm(A, B, ta, tb);
    Id id = push(std::move(out), {a, b}, nullptr, "matmul");
    nodes_[id].back = [a, b, ta, tb, id](Tape& t) {
      const auto& dC = t.nodes_[id].grad;
      const auto& A2 = t.val(a);
      const auto& B2 = t.val(b);
      if (t.wants(a)) {
        Tensor<T> dA = ta ? mm(B2, dC, tb, true) : mm(dC, B2, false, !tb);
        t.accumulate(a, dA);
      }
      if (t.wants(b)) {
        Tensor<T> dB = tb ? mm(dC, A2, true, ta) : mm(A2, dC, !ta, false);
        t.accumulate(b, dB);
      }
    };
    return id;
  }

  // Same shape, or b rank-1 broadcast over all leading axes.
  Id add(Id a, Id b) {
    const auto& A = val(a);
    const auto& B = val(b);
    bool broadcast = !A.same_shape(B);
    if (broadcast && !(B.rank() == 1 && B.cols() == A.cols()))
      throw std::invalid_argument("add: shapes " + shape_str(A.shape) + " vs " + shape_str(B.shape));
    Tensor<T> out = A;
    if (broadcast) {
      std::size_t R = A.rows(), C = A.cols();
      for (std::size_t r = 0; r < R; ++r)
        for (std::size_t c = 0; c < C; ++c) out.data[r * C + c] += B.data[c];
    } else {
      for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] += B.data[i];
    }
    Id id = push(std::move(out), {a, b}, nullptr, "add");
    nodes_[id].back = [a, b, broadcast, id](Tape& t) {
      const auto& dy = t.nodes_[id].grad;
      if (t.wants(a)) t.accumulate(a, dy);
      if (t.wants(b)) {
        if (!broadcast) {
          t.accumulate(b, dy);
        } else {
          Tensor<T> db = Tensor<T>::zeros(t.val(b).shape);
          std::size_t C = db.numel(), R = dy.numel() / C;
          for (std::size_t r = 0; r < R; ++r)
            for (std::size_t c = 0; c < C; ++c) db.data[c] += dy.data[r * C + c];
          t.accumulate(b, db);
        }
      }
    };
    return id;
  }

  Id mul(Id a, Id b) {
    const auto& A = val(a);
    const auto& B = val(b);
    if (!A.same_shape(B))
      throw std::invalid_argument("mul: shapes " + shape_str(A.shape) + " vs " + shape_str(B.shape));
    Tensor<T> out = A;
    for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] *= B.data[i];
    Id id = push(std::move(out), {a, b}, nullptr, "mul");
    nodes_[id].back = [a, b, id](Tape& t) {
      const auto& dy = t.nodes_[id].grad;
      if (t.wants(a)) {
        Tensor<T> da = dy;
        const auto& B2 = t.val(b);
        for (std::size_t i = 0; i < da.numel(); ++i) da.data[i] *= B2.data[i];
        t.accumulate(a, da);
      }
      if (t.wants(b)) {
        Tensor<T> db = dy;
        const auto& A2 = t.val(a);
        for (std::size_t i = 0; i < db.numel(); ++i) db.data[i] *= A2.data[i];
        t.accumulate(b, db);
      }
    };
    return id;
  }

  Id affine(Id a, T scale, T shift) {
    Tensor<T> out = val(a);
    for (auto& v : out.data) v = scale * v + shift;
    Id id = push(std::move(out), {a}, nullptr, "affine");
    nodes_[id].back = [a, scale, id](Tape& t) {
      if (!t.wants(a)) return;
      Tensor<T> da = t.nodes_[id].grad;
      for (auto& v : da.data) v *= scale;
      t.accumulate(a, da);
    };
    return id;
  }

  Id tanh_op(Id a) {
    Tensor<T> out = val(a);
    for (auto& v : out.data) v = std::tanh(v);
    Id id = push(std::move(out), {a}, nullptr, "tanh");
    nodes_[id].back = [a, id](Tape& t) {
      if (!t.wants(a)) return;
      const auto& y = t.nodes_[id].value;
      Tensor<T> da = t.nodes_[id].grad;
      for (std::size_t i = 0; i < da.numel(); ++i) da.data[i] *= T(1) - y.data[i] * y.data[i];
      t.accumulate(a, da);
    };
    return id;
  }

  Id sigmoid_op(Id a) {
    Tensor<T> out = val(a);
    for (auto& v : out.data) v = T(1) / (T(1) + std::exp(-v));
    Id id = push(std::move(out), {a}, nullptr, "sigmoid");
    nodes_[id].back = [a, id](Tape& t) {
      if (!t.wants(a)) return;
      const auto& y = t.nodes_[id].value;
      Tensor<T> da = t.nodes_[id].grad;
      for (std::size_t i = 0; i < da.numel(); ++i) da.data[i] *= y.data[i] * (T(1) - y.data[i]);
      t.accumulate(a, da);
    };
    return id;
  }

  Id log_op(Id a) {
    Tensor<T> out = val(a);
    for (auto& v : out.data) v = std::log(v);
    Id id = push(std::move(out), {a}, nullptr, "log");
    nodes_[id].back = [a, id](Tape& t) {
      if (!t.wants(a)) return;
      const auto& x = t.val(a);
      Tensor<T> da = t.nodes_[id].grad;
      for (std::size_t i = 0; i < da.numel(); ++i) da.data[i] /= x.data[i];
      t.accumulate(a, da);
    };
    return id;
  }

  // Row-wise softmax over the last axis with temperature:
  // y = exp(x/temp - max) / sum.
  Id softmax(Id a, T temperature = T(1)) {
    if (temperature <= T(0)) throw std::invalid_argument("softmax: temperature must be > 0");
    const auto& X = val(a);
    std::size_t R = X.rows(), C = X.cols();
    Tensor<T> out = X;
    for (std::size_t r = 0; r < R; ++r) {
      T* row = out.data.data() + r * C;
      T mx = row[0] / temperature;
      for (std::size_t c = 0; c < C; ++c) mx = std::max(mx, row[c] / temperature);
      T sum = T(0);
      for (std::size_t c = 0; c < C; ++c) {
        row[c] = std::exp(row[c] / temperature - mx);
        sum += row[c];
      }
      for (std::size_t c = 0; c < C; ++c) row[c] /= sum;
    }
    Id id = push(std::move(out), {a}, nullptr, "softmax");
    nodes_[id].back = [a, temperature, id](Tape& t) {
      if (!t.wants(a)) return;
      const auto& y = t.nodes_[id].value;
      const auto& dy = t.nodes_[id].grad;
      std::size_t R = y.rows(), C = y.cols();
      Tensor<T> da = Tensor<T>::zeros(y.shape);
      for (std::size_t r = 0; r < R; ++r) {
        T dot = T(0);
        for (std::size_t c = 0; c < C; ++c) dot += dy.data[r * C + c] * y.data[r * C + c];
        for (std::size_t c = 0; c < C; ++c)
          da.data[r * C + c] = y.data[r * C + c] * (dy.data[r * C + c] - dot) / temperature;
      }
      t.accumulate(a, da);
    };
    return id;
  }

  // Row-wise log-softmax over the last axis (stable).
  Id log_softmax(Id a) {
    const auto& X = val(a);
    std::size_t R = X.rows(), C = X.cols();
    Tensor<T> out = X;
    for (std::size_t r = 0; r < R; ++r) {
      T* row = out.data.data() + r * C;
      T mx = row[0];
      for (std::size_t c = 0; c < C; ++c) mx = std::max(mx, row[c]);
      T sum = T(0);
      for (std::size_t c = 0; c < C; ++c) sum += std::exp(row[c] - mx);
      T lse = mx + std::log(sum);
      for (std::size_t c = 0; c < C; ++c) row[c] -= lse;
    }
    Id id = push(std::move(out), {a}, nullptr, "log_softmax");
    nodes_[id].back = [a, id](Tape& t) {
      if (!t.wants(a)) return;
      const auto& y = t.nodes_[id].value;
      const auto& dy = t.nodes_[id].grad;
      std::size_t R = y.rows(), C = y.cols();
      Tensor<T> da = Tensor<T>::zeros(y.shape);
      for (std::size_t r = 0; r < R; ++r) {
        T sum = T(0);
        for (std::size_t c = 0; c < C; ++c) sum += dy.data[r * C + c];
        for (std::size_t c = 0; c < C; ++c)
          da.data[r * C + c] = dy.data[r * C + c] - std::exp(y.data[r * C + c]) * sum;
      }
      t.accumulate(a, da);
    };
    return id;
  }

  // Layer norm over the last axis, optionally in `groups` contiguous slices
  // (per-head normalization). gain/bias are rank-1 of length cols.
  Id layer_norm(Id x, Id gain, Id bias, T eps = T(1e-6), int groups = 1) {
    const auto& X = val(x);
    std::size_t R = X.rows(), C = X.cols();
    const auto& G = val(gain);
    const auto& B = val(bias);
    if (G.numel() != C || B.numel() != C)
      throw std::invalid_argument("layer_norm: gain/bias length " + std::to_string(G.numel()) +
                                  "/" + std::to_string(B.numel()) + " vs cols " + std::to_string(C));
    if (groups < 1 || C % groups != 0)
      throw std::invalid_argument("layer_norm: groups " + std::to_string(groups) +
                                  " must divide cols " + std::to_string(C));
    std::size_t gs = C / groups;
    Tensor<T> out(X.shape);
    // normalized values (pre gain/bias) and inverse stddev, kept for backward
    auto xhat = std::make_shared<Tensor<T>>(X.shape);
    auto istd = std::make_shared<Tensor<T>>(Shape{R * static_cast<std::size_t>(groups)});
    for (std::size_t r = 0; r < R; ++r) {
      for (std::size_t g = 0; g < static_cast<std::size_t>(groups); ++g) {
        const T* seg = X.data.data() + r * C + g * gs;
        T mean = T(0);
        for (std::size_t i = 0; i < gs; ++i) mean += seg[i];
        mean /= T(gs);
        T var = T(0);
        for (std::size_t i = 0; i < gs; ++i) var += (seg[i] - mean) * (seg[i] - mean);
        var /= T(gs);
        T inv = T(1) / std::sqrt(var + eps);
        istd->data[r * groups + g] = inv;
        for (std::size_t i = 0; i < gs; ++i) {
          std::size_t idx = r * C + g * gs + i;
          T xh = (X.data[idx] - mean) * inv;
          xhat->data[idx] = xh;
          out.data[idx] = G.data[g * gs + i] * xh + B.data[g * gs + i];
        }
      }
    }
    Id id = push(std::move(out), {x, gain, bias}, nullptr, "layer_norm");
    nodes_[id].back = [x, gain, bias, groups, gs, xhat, istd, id](Tape& t) {
      const auto& dy = t.nodes_[id].grad;
      const auto& G = t.val(gain);
      std::size_t C = dy.cols(), R = dy.rows();
      if (t.wants(gain)) {
        Tensor<T> dg = Tensor<T>::zeros(Shape{C});
        for (std::size_t r = 0; r < R; ++r)
          for (std::size_t c = 0; c < C; ++c) dg.data[c] += dy.data[r * C + c] * xhat->data[r * C + c];
        t.accumulate(gain, dg);
      }
      if (t.wants(bias)) {
        Tensor<T> db = Tensor<T>::zeros(Shape{C});
        for (std::size_t r = 0; r < R; ++r)
          for (std::size_t c = 0; c < C; ++c) db.data[c] += dy.data[r * C + c];
        t.accumulate(bias, db);
      }
      if (t.wants(x)) {
        Tensor<T> dx = Tensor<T>::zeros(dy.shape);
        for (std::size_t r = 0; r < R; ++r) {
          for (std::size_t g = 0; g < static_cast<std::size_t>(groups); ++g) {
            T inv = istd->data[r * groups + g];
            // dxhat = dy * gain; standard LN backward within the group
            T sum_dxh = T(0), sum_dxh_xh = T(0);
            for (std::size_t i = 0; i < gs; ++i) {
              std::size_t idx = r * C + g * gs + i;
              T dxh = dy.data[idx] * G.data[g * gs + i];
              sum_dxh += dxh;
              sum_dxh_xh += dxh * xhat->data[idx];
            }
            for (std::size_t i = 0; i < gs; ++i) {
              std::size_t idx = r * C + g * gs + i;
              T dxh = dy.data[idx] * G.data[g * gs + i];
              dx.data[idx] =
                  inv * (dxh - sum_dxh / T(gs) - xhat->data[idx] * sum_dxh_xh / T(gs));
            }
          }
        }
        t.accumulate(x, dx);
      }
    };
    return id;
  }

  // Inverted dropout: identity in eval mode, mask/keep scaling in train mode.
  Id dropout(Id a, T rate, bool train, Rng rng) {
    if (rate < T(0) || rate >= T(1)) throw std::invalid_argument("dropout: rate must be in [0,1)");
    if (!train || rate == T(0)) {
      Tensor<T> out = val(a);
      Id id = push(std::move(out), {a}, nullptr, "dropout");
      nodes_[id].back = [a, id](Tape& t) {
        if (t.wants(a)) t.accumulate(a, t.nodes_[id].grad);
      };
      return id;
    }
    const auto& X = val(a);
    T keep = T(1) - rate;
    auto mask = std::make_shared<Tensor<T>>(X.shape);
    Tensor<T> out = X;
    for (std::size_t i = 0; i < out.numel(); ++i) {
      T m = rng.next_double() < static_cast<double>(keep) ? T(1) / keep : T(0);
      mask->data[i] = m;
      out.data[i] *= m;
    }
    Id id = push(std::move(out), {a}, nullptr, "dropout");
    nodes_[id].back = [a, mask, id](Tape& t) {
      if (!t.wants(a)) return;
      Tensor<T> da = t.nodes_[id].grad;
      for (std::size_t i = 0; i < da.numel(); ++i) da.data[i] *= mask->data[i];
      t.accumulate(a, da);
    };
    return id;
  }

  // Gather rows of a [V, m] matrix: ids -> [len(ids), m].
  Id embedding_lookup(Id matrix, std::vector<int> ids) {
    const auto& M = val(matrix);
    if (M.rank() != 2) throw std::invalid_argument("embedding_lookup: matrix must be rank-2");
    std::size_t V = M.dim(0), m = M.dim(1);
    for (int t : ids)
      if (t < 0 || static_cast<std::size_t>(t) >= V)
        throw std::out_of_range("embedding_lookup: id " + std::to_string(t) +
                                " out of range for vocab " + std::to_string(V));
    Tensor<T> out(Shape{ids.size(), m});
    for (std::size_t r = 0; r < ids.size(); ++r)
      std::copy_n(M.data.data() + static_cast<std::size_t>(ids[r]) * m, m, out.data.data() + r * m);
    Id id = push(std::move(out), {matrix}, nullptr, "embedding_lookup");
    nodes_[id].back = [matrix, ids = std::move(ids), m, id](Tape& t) {
      if (!t.wants(matrix)) return;
      const auto& dy = t.nodes_[id].grad;
      Tensor<T> dM = Tensor<T>::zeros(t.val(matrix).shape);
      for (std::size_t r = 0; r < ids.size(); ++r)
        for (std::size_t c = 0; c < m; ++c)
          dM.data[static_cast<std::size_t>(ids[r]) * m + c] += dy.data[r * m + c];
      t.accumulate(matrix, dM);
    };
    return id;
  }

  // One element per row: x [R, C], index[r] -> out [R].
  Id pick(Id x, std::vector<int> index) {
    const auto& X = val(x);
    std::size_t R = X.rows(), C = X.cols();
    if (index.size() != R)
      throw std::invalid_argument("pick: " + std::to_string(index.size()) + " indices for " +
                                  std::to_string(R) + " rows");
    Tensor<T> out(Shape{R});
    for (std::size_t r = 0; r < R; ++r) {
      if (index[r] < 0 || static_cast<std::size_t>(index[r]) >= C)
        throw std::out_of_range("pick: index " + std::to_string(index[r]) + " out of range " +
                                std::to_string(C));
      out.data[r] = X.data[r * C + static_cast<std::size_t>(index[r])];
    }
    Id id = push(std::move(out), {x}, nullptr, "pick");
    nodes_[id].back = [x, index = std::move(index), C, id](Tape& t) {
      if (!t.wants(x)) return;
      const auto& dy = t.nodes_[id].grad;
      Tensor<T> dx = Tensor<T>::zeros(t.val(x).shape);
      for (std::size_t r = 0; r < dy.numel(); ++r)
        dx.data[r * C + static_cast<std::size_t>(index[r])] = dy.data[r];
      t.accumulate(x, dx);
    };
    return id;
  }

  // Scale contiguous blocks: s rank-1 of length L, x viewed as [L, numel/L].
  Id row_scale(Id x, Id s) {
    const auto& X = val(x);
    const auto& S = val(s);
    std::size_t L = S.numel();
    if (S.rank() != 1 || L == 0 || X.numel() % L != 0)
      throw std::invalid_argument("row_scale: scale length " + std::to_string(L) +
                                  " incompatible with " + shape_str(X.shape));
    std::size_t block = X.numel() / L;
    Tensor<T> out = X;
    for (std::size_t l = 0; l < L; ++l)
      for (std::size_t i = 0; i < block; ++i) out.data[l * block + i] *= S.data[l];
    Id id = push(std::move(out), {x, s}, nullptr, "row_scale");
    nodes_[id].back = [x, s, block, L, id](Tape& t) {
      const auto& dy = t.nodes_[id].grad;
      if (t.wants(x)) {
        const auto& S2 = t.val(s);
        Tensor<T> dx = dy;
        for (std::size_t l = 0; l < L; ++l)
          for (std::size_t i = 0; i < block; ++i) dx.data[l * block + i] *= S2.data[l];
        t.accumulate(x, dx);
      }
      if (t.wants(s)) {
        const auto& X2 = t.val(x);
        Tensor<T> ds = Tensor<T>::zeros(Shape{L});
        for (std::size_t l = 0; l < L; ++l) {
          T acc = T(0);
          for (std::size_t i = 0; i < block; ++i)
            acc += dy.data[l * block + i] * X2.data[l * block + i];
          ds.data[l] = acc;
        }
        t.accumulate(s, ds);
      }
    };
    return id;
  }

  // [R, C] -> [R*times, C], each row repeated `times` consecutively.
  Id repeat_rows(Id x, std::size_t times) {
    const auto& X = val(x);
    if (X.rank() != 2) throw std::invalid_argument("repeat_rows: rank-2 required");
    std::size_t R = X.dim(0), C = X.dim(1);
    Tensor<T> out(Shape{R * times, C});
    for (std::size_t r = 0; r < R; ++r)
      for (std::size_t i = 0; i < times; ++i)
        std::copy_n(X.data.data() + r * C, C, out.data.data() + (r * times + i) * C);
    Id id = push(std::move(out), {x}, nullptr, "repeat_rows");
    nodes_[id].back = [x, times, R, C, id](Tape& t) {
      if (!t.wants(x)) return;
      const auto& dy = t.nodes_[id].grad;
      Tensor<T> dx = Tensor<T>::zeros(Shape{R, C});
      for (std::size_t r = 0; r < R; ++r)
        for (std::size_t i = 0; i < times; ++i)
          for (std::size_t c = 0; c < C; ++c) dx.data[r * C + c] += dy.data[(r * times + i) * C + c];
      t.accumulate(x, dx);
    };
    return id;
  }

  // [A, B, C] -> [A, C, B]
  Id swap_middle_last(Id x) {
    const auto& X = val(x);
    if (X.rank() != 3) throw std::invalid_argument("swap_middle_last: rank-3 required");
    std::size_t A = X.dim(0), B = X.dim(1), C = X.dim(2);
    Tensor<T> out(Shape{A, C, B});
    for (std::size_t a2 = 0; a2 < A; ++a2)
      for (std::size_t b = 0; b < B; ++b)
        for (std::size_t c = 0; c < C; ++c)
          out.data[(a2 * C + c) * B + b] = X.data[(a2 * B + b) * C + c];
    Id id = push(std::move(out), {x}, nullptr, "swap_middle_last");
    nodes_[id].back = [x, A, B, C, id](Tape& t) {
      if (!t.wants(x)) return;
      const auto& dy = t.nodes_[id].grad;
      Tensor<T> dx = Tensor<T>::zeros(Shape{A, B, C});
      for (std::size_t a2 = 0; a2 < A; ++a2)
        for (std::size_t b = 0; b < B; ++b)
          for (std::size_t c = 0; c < C; ++c)
            dx.data[(a2 * B + b) * C + c] = dy.data[(a2 * C + c) * B + b];
      t.accumulate(x, dx);
    };
    return id;
  }

  // Per-head weighted sum over locations:
  // alpha [B, g, F] x values [B, F, C] -> context [B, C], where head h owns
  // the contiguous channel slice of width C/g.
  Id attention_context(Id alpha, Id values) {
    const auto& Al = val(alpha);
    const auto& V = val(values);
    if (Al.rank() != 3 || V.rank() != 3)
      throw std::invalid_argument("attention_context: rank-3 required");
    std::size_t Bt = Al.dim(0), g = Al.dim(1), F = Al.dim(2), C = V.dim(2);
    if (V.dim(0) != Bt || V.dim(1) != F || C % g != 0)
      throw std::invalid_argument("attention_context: alpha " + shape_str(Al.shape) +
                                  " vs values " + shape_str(V.shape));
    std::size_t cs = C / g;
    Tensor<T> out(Shape{Bt, C});
    for (std::size_t b = 0; b < Bt; ++b)
      for (std::size_t h = 0; h < g; ++h)
        for (std::size_t j = 0; j < F; ++j) {
          T a2 = Al.data[(b * g + h) * F + j];
          const T* vrow = V.data.data() + (b * F + j) * C + h * cs;
          T* orow = out.data.data() + b * C + h * cs;
          for (std::size_t c = 0; c < cs; ++c) orow[c] += a2 * vrow[c];
        }
    Id id = push(std::move(out), {alpha, values}, nullptr, "attention_context");
    nodes_[id].back = [alpha, values, Bt, g, F, C, cs, id](Tape& t) {
      const auto& dy = t.nodes_[id].grad;
      const auto& Al2 = t.val(alpha);
      const auto& V2 = t.val(values);
      if (t.wants(alpha)) {
        Tensor<T> da = Tensor<T>::zeros(Shape{Bt, g, F});
        for (std::size_t b = 0; b < Bt; ++b)
          for (std::size_t h = 0; h < g; ++h)
            for (std::size_t j = 0; j < F; ++j) {
              const T* vrow = V2.data.data() + (b * F + j) * C + h * cs;
              const T* drow = dy.data.data() + b * C + h * cs;
              T acc = T(0);
              for (std::size_t c = 0; c < cs; ++c) acc += drow[c] * vrow[c];
              da.data[(b * g + h) * F + j] = acc;
            }
        t.accumulate(alpha, da);
      }
      if (t.wants(values)) {
        Tensor<T> dv = Tensor<T>::zeros(Shape{Bt, F, C});
        for (std::size_t b = 0; b < Bt; ++b)
          for (std::size_t h = 0; h < g; ++h)
            for (std::size_t j = 0; j < F; ++j) {
              T a2 = Al2.data[(b * g + h) * F + j];
              const T* drow = dy.data.data() + b * C + h * cs;
              T* vrow = dv.data.data() + (b * F + j) * C + h * cs;
              for (std::size_t c = 0; c < cs; ++c) vrow[c] += a2 * drow[c];
            }
        t.accumulate(values, dv);
      }
    };
    return id;
  }

  // Per-head inner product: x [R, k], w rank-1 [k], heads g -> [R, g].
  Id grouped_inner(Id x, Id w, int groups) {
    const auto& X = val(x);
    const auto& W = val(w);
    std::size_t R = X.rows(), k = X.cols();
    if (W.numel() != k) throw std::invalid_argument("grouped_inner: w length vs cols mismatch");
    if (groups < 1 || k % groups != 0)
      throw std::invalid_argument("grouped_inner: groups must divide cols");
    std::size_t g = groups, gs = k / g;
    Tensor<T> out(Shape{R, g});
    for (std::size_t r = 0; r < R; ++r)
      for (std::size_t h = 0; h < g; ++h) {
        T acc = T(0);
        const T* xr = X.data.data() + r * k + h * gs;
        const T* wr = W.data.data() + h * gs;
        for (std::size_t i = 0; i < gs; ++i) acc += xr[i] * wr[i];
        out.data[r * g + h] = acc;
      }
    Id id = push(std::move(out), {x, w}, nullptr, "grouped_inner");
    nodes_[id].back = [x, w, g, gs, k, id](Tape& t) {
      const auto& dy = t.nodes_[id].grad;
      std::size_t R = dy.rows();
      if (t.wants(x)) {
        const auto& W2 = t.val(w);
        Tensor<T> dx = Tensor<T>::zeros(t.val(x).shape);
        for (std::size_t r = 0; r < R; ++r)
          for (std::size_t h = 0; h < g; ++h) {
            T d = dy.data[r * g + h];
            for (std::size_t i = 0; i < gs; ++i)
              dx.data[r * k + h * gs + i] = d * W2.data[h * gs + i];
          }
        t.accumulate(x, dx);
      }
      if (t.wants(w)) {
        const auto& X2 = t.val(x);
        Tensor<T> dw = Tensor<T>::zeros(t.val(w).shape);
        for (std::size_t r = 0; r < R; ++r)
          for (std::size_t h = 0; h < g; ++h) {
            T d = dy.data[r * g + h];
            for (std::size_t i = 0; i < gs; ++i)
              dw.data[h * gs + i] += d * X2.data[r * k + h * gs + i];
          }
        t.accumulate(w, dw);
      }
    };
    return id;
  }

  Id concat_cols(std::initializer_list<Id> parts) {
    return concat_cols(std::span<const Id>(parts.begin(), parts.size()));
  }
  Id concat_cols(std::span<const Id> parts) {
    if (parts.empty()) throw std::invalid_argument("concat: no inputs");
    std::size_t R = val(parts[0]).rows(), C = 0;
    for (Id p : parts) {
      if (val(p).rank() != 2 || val(p).rows() != R)
        throw std::invalid_argument("concat: row mismatch");
      C += val(p).cols();
    }
    Tensor<T> out(Shape{R, C});
    std::size_t off = 0;
    for (Id p : parts) {
      const auto& X = val(p);
      for (std::size_t r = 0; r < R; ++r)
        std::copy_n(X.data.data() + r * X.cols(), X.cols(), out.data.data() + r * C + off);
      off += X.cols();
    }
    std::vector<Id> in(parts.begin(), parts.end());
    Id id = push(std::move(out), in, nullptr, "concat");
    nodes_[id].back = [in, R, C, id](Tape& t) {
      const auto& dy = t.nodes_[id].grad;
      std::size_t off = 0;
      for (Id p : in) {
        std::size_t pc = t.val(p).cols();
        if (t.wants(p)) {
          Tensor<T> dp(Shape{R, pc});
          for (std::size_t r = 0; r < R; ++r)
            std::copy_n(dy.data.data() + r * C + off, pc, dp.data.data() + r * pc);
          t.accumulate(p, dp);
        }
        off += pc;
      }
    };
    return id;
  }

  Id concat_rows(std::span<const Id> parts) {
    if (parts.empty()) throw std::invalid_argument("concat: no inputs");
    std::size_t C = val(parts[0]).cols(), R = 0;
    for (Id p : parts) {
      if (val(p).rank() != 2 || val(p).cols() != C)
        throw std::invalid_argument("concat: col mismatch");
      R += val(p).dim(0);
    }
    Tensor<T> out(Shape{R, C});
    std::size_t off = 0;
    for (Id p : parts) {
      const auto& X = val(p);
      std::copy_n(X.data.data(), X.numel(), out.data.data() + off);
      off += X.numel();
    }
    std::vector<Id> in(parts.begin(), parts.end());
    Id id = push(std::move(out), in, nullptr, "concat_rows");
    nodes_[id].back = [in, id](Tape& t) {
      const auto& dy = t.nodes_[id].grad;
      std::size_t off = 0;
      for (Id p : in) {
        std::size_t n = t.val(p).numel();
        if (t.wants(p)) {
          Tensor<T> dp(t.val(p).shape);
          std::copy_n(dy.data.data() + off, n, dp.data.data());
          t.accumulate(p, dp);
        }
        off += n;
      }
    };
    return id;
  }

  std::vector<Id> split_cols(Id x, std::initializer_list<std::size_t> sizes) {
    return split_cols(x, std::span<const std::size_t>(sizes.begin(), sizes.size()));
  }
  std::vector<Id> split_cols(Id x, std::span<const std::size_t> sizes) {
    Tensor<T> X = val(x);  // copy: pushes below invalidate node references
    if (X.rank() != 2) throw std::invalid_argument("split: rank-2 required");
    std::size_t R = X.dim(0), C = X.dim(1), sum = 0;
    for (auto s : sizes) sum += s;
    if (sum != C) throw std::invalid_argument("split: sizes sum to " + std::to_string(sum) +
                                              " but cols = " + std::to_string(C));
    std::vector<Id> out;
    std::size_t off = 0;
    for (auto s : sizes) {
      Tensor<T> piece(Shape{R, s});
      for (std::size_t r = 0; r < R; ++r)
        std::copy_n(X.data.data() + r * C + off, s, piece.data.data() + r * s);
      Id id = push(std::move(piece), {x}, nullptr, "split");
      std::size_t off2 = off;
      nodes_[id].back = [x, off2, s, R, C, id](Tape& t) {
        if (!t.wants(x)) return;
        const auto& dy = t.nodes_[id].grad;
        Tensor<T> dx = Tensor<T>::zeros(Shape{R, C});
        for (std::size_t r = 0; r < R; ++r)
          std::copy_n(dy.data.data() + r * s, s, dx.data.data() + r * C + off2);
        t.accumulate(x, dx);
      };
      out.push_back(id);
      off += s;
    }
    return out;
  }

  Id reshape(Id x, Shape shape) {
    const auto& X = val(x);
    if (Tensor<T>::product(shape) != X.numel())
      throw std::invalid_argument("reshape: " + shape_str(X.shape) + " to " + shape_str(shape));
    Tensor<T> out = X;
    out.shape = shape;
    Id id = push(std::move(out), {x}, nullptr, "reshape");
    nodes_[id].back = [x, id](Tape& t) {
      if (!t.wants(x)) return;
      Tensor<T> dx = t.nodes_[id].grad;
      dx.shape = t.val(x).shape;
      t.accumulate(x, dx);
    };
    return id;
  }

  Id sum_all(Id x) {
    const auto& X = val(x);
    T acc = T(0);
    for (T v : X.data) acc += v;
    Id id = push(Tensor<T>::scalar(acc), {x}, nullptr, "sum");
    nodes_[id].back = [x, id](Tape& t) {
      if (!t.wants(x)) return;
      T d = t.nodes_[id].grad.data[0];
      t.accumulate(x, Tensor<T>::full(t.val(x).shape, d));
    };
    return id;
  }

  Id mean_all(Id x) {
    std::size_t n = val(x).numel();
    return affine(sum_all(x), T(1) / T(n), T(0));
  }

  Id sum_squares(Id x) {
    const auto& X = val(x);
    T acc = T(0);
    for (T v : X.data) acc += v * v;
    Id id = push(Tensor<T>::scalar(acc), {x}, nullptr, "sum_squares");
    nodes_[id].back = [x, id](Tape& t) {
      if (!t.wants(x)) return;
      T d = t.nodes_[id].grad.data[0];
      Tensor<T> dx = t.val(x);
      for (auto& v : dx.data) v *= T(2) * d;
      t.accumulate(x, dx);
    };
    return id;
  }

  // ---- backward --------------------------------------------------------

  // Seeds d(loss)/d(loss) = 1, walks the tape in reverse, and adds each
  // parameter leaf's gradient into Parameter::grad.
  void backward(Id loss) {
    if (nodes_.empty() || loss < 0 || loss >= static_cast<Id>(nodes_.size()))
      throw std::logic_error("backward: no recorded forward pass for this loss");
    if (nodes_[loss].value.numel() != 1)
      throw std::logic_error("backward: loss must be scalar, got " +
                             shape_str(nodes_[loss].value.shape));
    for (auto& n : nodes_)
      if (n.needs_grad && n.grad.numel() == 0) n.grad = Tensor<T>::zeros(n.value.shape);
    if (!nodes_[loss].needs_grad) return;  // loss independent of all parameters
    nodes_[loss].grad.data[0] = T(1);
    for (Id id = loss; id >= 0; --id) {
      auto& n = nodes_[id];
      if (!n.needs_grad || !n.back) continue;
      n.back(*this);
    }
    for (auto& [p, id] : param_nodes_) {
      const auto& g = nodes_[id].grad;
      for (std::size_t i = 0; i < g.numel(); ++i) p->grad.data[i] += g.data[i];
    }
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    std::function<void(Tape&)> back;
    Parameter<T>* param = nullptr;
    bool needs_grad = false;
  };

  const Tensor<T>& val(Id id) const { return nodes_.at(id).value; }
  bool wants(Id id) const { return nodes_[id].needs_grad; }

  void accumulate(Id id, const Tensor<T>& g) {
    auto& dst = nodes_[id].grad;
    for (std::size_t i = 0; i < g.numel(); ++i) dst.data[i] += g.data[i];
  }

  Id push(Tensor<T> value, std::vector<Id> inputs, Parameter<T>* p, const char* op) {
    if (check_finite && !value.all_finite())
      throw numeric_error(std::string("non-finite value produced by op ") + op);
    Node n;
    n.value = std::move(value);
    n.param = p;
    for (Id i : inputs)
      if (nodes_[i].needs_grad) n.needs_grad = true;
    nodes_.push_back(std::move(n));
    return static_cast<Id>(nodes_.size() - 1);
  }

  static Tensor<T> mm(const Tensor<T>& A, const Tensor<T>& B, bool ta, bool tb) {
    std::size_t ar = ta ? A.dim(1) : A.dim(0), ac = ta ? A.dim(0) : A.dim(1);
    std::size_t bc = tb ? B.dim(0) : B.dim(1);
    Tensor<T> C(Shape{ar, bc});
    if (!ta && !tb) {
      std::size_t K = ac, N = bc;
      for (std::size_t i = 0; i < ar; ++i) {
        T* crow = C.data.data() + i * N;
        for (std::size_t p = 0; p < K; ++p) {
          T a = A.data[i * K + p];
          if (a == T(0)) continue;
          const T* brow = B.data.data() + p * N;
          for (std::size_t j = 0; j < N; ++j) crow[j] += a * brow[j];
        }
      }
    } else if (!ta && tb) {
      std::size_t K = ac, N = bc;
      for (std::size_t i = 0; i < ar; ++i) {
        const T* arow = A.data.data() + i * K;
        for (std::size_t j = 0; j < N; ++j) {
          const T* brow = B.data.data() + j * K;
          T acc = T(0);
          for (std::size_t p = 0; p < K; ++p) acc += arow[p] * brow[p];
          C.data[i * N + j] = acc;
        }
      }
    } else if (ta && !tb) {
      std::size_t K = ac, N = bc;  // A is [K, ar]
      for (std::size_t p = 0; p < K; ++p) {
        const T* arow = A.data.data() + p * ar;
        const T* brow = B.data.data() + p * N;
        for (std::size_t i = 0; i < ar; ++i) {
          T a = arow[i];
          if (a == T(0)) continue;
          T* crow = C.data.data() + i * N;
          for (std::size_t j = 0; j < N; ++j) crow[j] += a * brow[j];
        }
      }
    } else {
      std::size_t K = ac, N = bc;
      for (std::size_t i = 0; i < ar; ++i)
        for (std::size_t j = 0; j < N; ++j) {
          T acc = T(0);
          for (std::size_t p = 0; p < K; ++p) acc += A.data[p * ar + i] * B.data[j * K + p];
          C.data[i * N + j] = acc;
        }
    }
    return C;
  }

  // deque: appending never moves existing nodes, so value() references stay
  // valid while the graph grows
  std::deque<Node> nodes_;
  std::map<Parameter<T>*, Id> param_nodes_;
};

}  // namespace comic
