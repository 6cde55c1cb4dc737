#include "titlegen/tensor/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>

#include "titlegen/errors.hpp"
#include "titlegen/tensor/kernels.hpp"

namespace titlegen::tensor {

namespace {

using detail::Node;
using NodePtr = std::shared_ptr<detail::Node>;

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << "]";
  return os.str();
}

void require_rank2(const Tensor& t, const char* who) {
  if (t.rank() != 2)
    throw ShapeError(std::string(who) + ": expected a rank-2 tensor, got " +
                     shape_str(t.shape()));
}

bool tracking(std::initializer_list<const Tensor*> inputs) {
  if (!Tape::active()) return false;
  for (const Tensor* t : inputs)
    if (t->requires_grad()) return true;
  return false;
}

void record(Tensor& out, std::function<void()> pull) {
  out.set_requires_grad(true);
  Tape::active()->record(out, std::move(pull));
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape())
    throw ShapeError("add: shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  std::vector<double> v(a.numel());
  const auto& av = a.values();
  const auto& bv = b.values();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = av[i] + bv[i];
  Tensor out = Tensor::from_values(a.shape(), std::move(v));
  if (tracking({&a, &b})) {
    NodePtr an = a.node(), bn = b.node(), on = out.node();
    record(out, [an, bn, on] {
      if (an->requires_grad) {
        an->ensure_grad();
        for (std::size_t i = 0; i < on->grad.size(); ++i)
          an->grad[i] += on->grad[i];
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        for (std::size_t i = 0; i < on->grad.size(); ++i)
          bn->grad[i] += on->grad[i];
      }
    });
  }
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape())
    throw ShapeError("sub: shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  std::vector<double> v(a.numel());
  const auto& av = a.values();
  const auto& bv = b.values();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = av[i] - bv[i];
  Tensor out = Tensor::from_values(a.shape(), std::move(v));
  if (tracking({&a, &b})) {
    NodePtr an = a.node(), bn = b.node(), on = out.node();
    record(out, [an, bn, on] {
      if (an->requires_grad) {
        an->ensure_grad();
        for (std::size_t i = 0; i < on->grad.size(); ++i)
          an->grad[i] += on->grad[i];
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        for (std::size_t i = 0; i < on->grad.size(); ++i)
          bn->grad[i] -= on->grad[i];
      }
    });
  }
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape())
    throw ShapeError("mul: shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  std::vector<double> v(a.numel());
  const auto& av = a.values();
  const auto& bv = b.values();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = av[i] * bv[i];
  Tensor out = Tensor::from_values(a.shape(), std::move(v));
  if (tracking({&a, &b})) {
    NodePtr an = a.node(), bn = b.node(), on = out.node();
    record(out, [an, bn, on] {
      if (an->requires_grad) {
        an->ensure_grad();
        for (std::size_t i = 0; i < on->grad.size(); ++i)
          an->grad[i] += on->grad[i] * bn->values[i];
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        for (std::size_t i = 0; i < on->grad.size(); ++i)
          bn->grad[i] += on->grad[i] * an->values[i];
      }
    });
  }
  return out;
}

Tensor scalar_mul(const Tensor& a, double c) {
  std::vector<double> v(a.numel());
  const auto& av = a.values();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = av[i] * c;
  Tensor out = Tensor::from_values(a.shape(), std::move(v));
  if (tracking({&a})) {
    NodePtr an = a.node(), on = out.node();
    record(out, [an, on, c] {
      an->ensure_grad();
      for (std::size_t i = 0; i < on->grad.size(); ++i)
        an->grad[i] += on->grad[i] * c;
    });
  }
  return out;
}

Tensor add_rowvec(const Tensor& a, const Tensor& v) {
  require_rank2(a, "add_rowvec");
  if (v.rank() != 1 || v.dim(0) != a.dim(1))
    throw ShapeError("add_rowvec: vector " + shape_str(v.shape()) +
                     " does not match matrix " + shape_str(a.shape()));
  const std::size_t m = a.dim(0), n = a.dim(1);
  std::vector<double> out_v(a.numel());
  const auto& av = a.values();
  const auto& vv = v.values();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out_v[i * n + j] = av[i * n + j] + vv[j];
  Tensor out = Tensor::from_values(a.shape(), std::move(out_v));
  if (tracking({&a, &v})) {
    NodePtr an = a.node(), vn = v.node(), on = out.node();
    record(out, [an, vn, on, m, n] {
      if (an->requires_grad) {
        an->ensure_grad();
        for (std::size_t i = 0; i < m * n; ++i) an->grad[i] += on->grad[i];
      }
      if (vn->requires_grad) {
        vn->ensure_grad();
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < n; ++j)
            vn->grad[j] += on->grad[i * n + j];
      }
    });
  }
  return out;
}

Tensor mul_colvec(const Tensor& a, const Tensor& c) {
  require_rank2(a, "mul_colvec");
  if (c.rank() != 1 || c.dim(0) != a.dim(0))
    throw ShapeError("mul_colvec: vector " + shape_str(c.shape()) +
                     " does not match matrix " + shape_str(a.shape()));
  const std::size_t m = a.dim(0), n = a.dim(1);
  std::vector<double> out_v(a.numel());
  const auto& av = a.values();
  const auto& cv = c.values();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out_v[i * n + j] = av[i * n + j] * cv[i];
  Tensor out = Tensor::from_values(a.shape(), std::move(out_v));
  if (tracking({&a, &c})) {
    NodePtr an = a.node(), cn = c.node(), on = out.node();
    record(out, [an, cn, on, m, n] {
      if (an->requires_grad) {
        an->ensure_grad();
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < n; ++j)
            an->grad[i * n + j] += on->grad[i * n + j] * cn->values[i];
      }
      if (cn->requires_grad) {
        cn->ensure_grad();
        for (std::size_t i = 0; i < m; ++i) {
          double s = 0.0;
          for (std::size_t j = 0; j < n; ++j)
            s += on->grad[i * n + j] * an->values[i * n + j];
          cn->grad[i] += s;
        }
      }
    });
  }
  return out;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul");
  require_rank2(b, "matmul");
  if (a.dim(1) != b.dim(0))
    throw ShapeError("matmul: inner dimensions disagree, " +
                     shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  const std::size_t p = a.dim(0), q = a.dim(1), r = b.dim(1);
  std::vector<double> v(p * r);
  kernels::matmul(a.values().data(), b.values().data(), v.data(), p, q, r);
  Tensor out = Tensor::from_values({p, r}, std::move(v));
  if (tracking({&a, &b})) {
    NodePtr an = a.node(), bn = b.node(), on = out.node();
    record(out, [an, bn, on, p, q, r] {
      if (an->requires_grad) {
        an->ensure_grad();
        // dA = dC * B^T
        kernels::matmul(on->grad.data(), bn->values.data(), an->grad.data(),
                        p, r, q, false, true, true);
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        // dB = A^T * dC
        kernels::matmul(an->values.data(), on->grad.data(), bn->grad.data(),
                        q, p, r, true, false, true);
      }
    });
  }
  return out;
}

Tensor transpose(const Tensor& a) {
  require_rank2(a, "transpose");
  const std::size_t m = a.dim(0), n = a.dim(1);
  std::vector<double> v(m * n);
  const auto& av = a.values();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) v[j * m + i] = av[i * n + j];
  Tensor out = Tensor::from_values({n, m}, std::move(v));
  if (tracking({&a})) {
    NodePtr an = a.node(), on = out.node();
    record(out, [an, on, m, n] {
      an->ensure_grad();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j)
          an->grad[i * n + j] += on->grad[j * m + i];
    });
  }
  return out;
}

Tensor tanh(const Tensor& a) {
  std::vector<double> v(a.numel());
  kernels::tanh_vec(a.values().data(), v.data(), v.size());
  Tensor out = Tensor::from_values(a.shape(), std::move(v));
  if (tracking({&a})) {
    NodePtr an = a.node(), on = out.node();
    record(out, [an, on] {
      an->ensure_grad();
      for (std::size_t i = 0; i < on->grad.size(); ++i) {
        const double y = on->values[i];
        an->grad[i] += on->grad[i] * (1.0 - y * y);
      }
    });
  }
  return out;
}

Tensor sigmoid(const Tensor& a) {
  std::vector<double> v(a.numel());
  kernels::sigmoid_vec(a.values().data(), v.data(), v.size());
  Tensor out = Tensor::from_values(a.shape(), std::move(v));
  if (tracking({&a})) {
    NodePtr an = a.node(), on = out.node();
    record(out, [an, on] {
      an->ensure_grad();
      for (std::size_t i = 0; i < on->grad.size(); ++i) {
        const double y = on->values[i];
        an->grad[i] += on->grad[i] * y * (1.0 - y);
      }
    });
  }
  return out;
}

Tensor relu(const Tensor& a) {
  std::vector<double> v(a.numel());
  const auto& av = a.values();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = av[i] > 0.0 ? av[i] : 0.0;
  Tensor out = Tensor::from_values(a.shape(), std::move(v));
  if (tracking({&a})) {
    NodePtr an = a.node(), on = out.node();
    record(out, [an, on] {
      an->ensure_grad();
      for (std::size_t i = 0; i < on->grad.size(); ++i)
        if (an->values[i] > 0.0) an->grad[i] += on->grad[i];
    });
  }
  return out;
}

Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double x : a.values()) s += x;
  Tensor out = Tensor::scalar(s);
  if (tracking({&a})) {
    NodePtr an = a.node(), on = out.node();
    record(out, [an, on] {
      an->ensure_grad();
      const double g = on->grad[0];
      for (double& x : an->grad) x += g;
    });
  }
  return out;
}

Tensor concat_rows(std::span<const Tensor> parts) {
  if (parts.empty()) throw ContractError("concat_rows: no inputs");
  const std::size_t n = parts.front().dim(1);
  std::size_t rows = 0;
  for (const Tensor& t : parts) {
    require_rank2(t, "concat_rows");
    if (t.dim(1) != n)
      throw ShapeError("concat_rows: column mismatch " + shape_str(t.shape()));
    rows += t.dim(0);
  }
  std::vector<double> v;
  v.reserve(rows * n);
  for (const Tensor& t : parts)
    v.insert(v.end(), t.values().begin(), t.values().end());
  Tensor out = Tensor::from_values({rows, n}, std::move(v));

  bool track = false;
  if (Tape::active())
    for (const Tensor& t : parts) track = track || t.requires_grad();
  if (track) {
    std::vector<NodePtr> ins;
    ins.reserve(parts.size());
    for (const Tensor& t : parts) ins.push_back(t.node());
    NodePtr on = out.node();
    record(out, [ins, on] {
      std::size_t offset = 0;
      for (const NodePtr& in : ins) {
        const std::size_t len = in->numel();
        if (in->requires_grad) {
          in->ensure_grad();
          for (std::size_t i = 0; i < len; ++i)
            in->grad[i] += on->grad[offset + i];
        }
        offset += len;
      }
    });
  }
  return out;
}

Tensor concat_cols(std::span<const Tensor> parts) {
  if (parts.empty()) throw ContractError("concat_cols: no inputs");
  const std::size_t m = parts.front().dim(0);
  std::size_t cols = 0;
  for (const Tensor& t : parts) {
    require_rank2(t, "concat_cols");
    if (t.dim(0) != m)
      throw ShapeError("concat_cols: row mismatch " + shape_str(t.shape()));
    cols += t.dim(1);
  }
  std::vector<double> v(m * cols);
  std::size_t col_off = 0;
  for (const Tensor& t : parts) {
    const std::size_t n = t.dim(1);
    const auto& tv = t.values();
    for (std::size_t i = 0; i < m; ++i)
      std::memcpy(&v[i * cols + col_off], &tv[i * n], n * sizeof(double));
    col_off += n;
  }
  Tensor out = Tensor::from_values({m, cols}, std::move(v));

  bool track = false;
  if (Tape::active())
    for (const Tensor& t : parts) track = track || t.requires_grad();
  if (track) {
    std::vector<NodePtr> ins;
    std::vector<std::size_t> widths;
    for (const Tensor& t : parts) {
      ins.push_back(t.node());
      widths.push_back(t.dim(1));
    }
    NodePtr on = out.node();
    record(out, [ins, widths, on, m, cols] {
      std::size_t off = 0;
      for (std::size_t k = 0; k < ins.size(); ++k) {
        const std::size_t n = widths[k];
        if (ins[k]->requires_grad) {
          ins[k]->ensure_grad();
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j)
              ins[k]->grad[i * n + j] += on->grad[i * cols + off + j];
        }
        off += n;
      }
    });
  }
  return out;
}

Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t end) {
  require_rank2(a, "slice_rows");
  const std::size_t m = a.dim(0), n = a.dim(1);
  if (begin >= end || end > m)
    throw ShapeError("slice_rows: invalid range on " + shape_str(a.shape()));
  std::vector<double> v(a.values().begin() + begin * n,
                        a.values().begin() + end * n);
  Tensor out = Tensor::from_values({end - begin, n}, std::move(v));
  if (tracking({&a})) {
    NodePtr an = a.node(), on = out.node();
    record(out, [an, on, begin, n] {
      an->ensure_grad();
      const std::size_t len = on->grad.size();
      for (std::size_t i = 0; i < len; ++i)
        an->grad[begin * n + i] += on->grad[i];
    });
  }
  return out;
}

Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t end) {
  require_rank2(a, "slice_cols");
  const std::size_t m = a.dim(0), n = a.dim(1);
  if (begin >= end || end > n)
    throw ShapeError("slice_cols: invalid range on " + shape_str(a.shape()));
  const std::size_t w = end - begin;
  std::vector<double> v(m * w);
  const auto& av = a.values();
  for (std::size_t i = 0; i < m; ++i)
    std::memcpy(&v[i * w], &av[i * n + begin], w * sizeof(double));
  Tensor out = Tensor::from_values({m, w}, std::move(v));
  if (tracking({&a})) {
    NodePtr an = a.node(), on = out.node();
    record(out, [an, on, begin, m, n, w] {
      an->ensure_grad();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < w; ++j)
          an->grad[i * n + begin + j] += on->grad[i * w + j];
    });
  }
  return out;
}

Tensor reshape(const Tensor& a, Shape shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  if (n != a.numel())
    throw ShapeError("reshape: cannot view " + shape_str(a.shape()) + " as " +
                     shape_str(shape));
  Tensor out = Tensor::from_values(std::move(shape), a.values());
  if (tracking({&a})) {
    NodePtr an = a.node(), on = out.node();
    record(out, [an, on] {
      an->ensure_grad();
      for (std::size_t i = 0; i < on->grad.size(); ++i)
        an->grad[i] += on->grad[i];
    });
  }
  return out;
}

Tensor repeat_rows_block(const Tensor& a, std::size_t times) {
  require_rank2(a, "repeat_rows_block");
  if (times == 0) throw ContractError("repeat_rows_block: times must be >= 1");
  const std::size_t m = a.dim(0), n = a.dim(1);
  std::vector<double> v(m * times * n);
  const auto& av = a.values();
  for (std::size_t b = 0; b < m; ++b)
    for (std::size_t t = 0; t < times; ++t)
      std::memcpy(&v[(b * times + t) * n], &av[b * n], n * sizeof(double));
  Tensor out = Tensor::from_values({m * times, n}, std::move(v));
  if (tracking({&a})) {
    NodePtr an = a.node(), on = out.node();
    record(out, [an, on, m, n, times] {
      an->ensure_grad();
      for (std::size_t b = 0; b < m; ++b)
        for (std::size_t t = 0; t < times; ++t)
          for (std::size_t j = 0; j < n; ++j)
            an->grad[b * n + j] += on->grad[(b * times + t) * n + j];
    });
  }
  return out;
}

Tensor gather_rows(const Tensor& a, std::span<const std::size_t> rows) {
  require_rank2(a, "gather_rows");
  const std::size_t m = a.dim(0), n = a.dim(1);
  for (std::size_t r : rows)
    if (r >= m)
      throw IndexError("gather_rows: row " + std::to_string(r) +
                       " out of range [0," + std::to_string(m) + ")");
  std::vector<double> v(rows.size() * n);
  const auto& av = a.values();
  for (std::size_t i = 0; i < rows.size(); ++i)
    std::memcpy(&v[i * n], &av[rows[i] * n], n * sizeof(double));
  Tensor out = Tensor::from_values({rows.size(), n}, std::move(v));
  if (tracking({&a})) {
    NodePtr an = a.node(), on = out.node();
    std::vector<std::size_t> rows_copy(rows.begin(), rows.end());
    record(out, [an, on, rows_copy, n] {
      an->ensure_grad();
      for (std::size_t i = 0; i < rows_copy.size(); ++i) {
        double* dst = &an->grad[rows_copy[i] * n];
        const double* src = &on->grad[i * n];
        for (std::size_t j = 0; j < n; ++j) dst[j] += src[j];
      }
    });
  }
  return out;
}

Tensor embedding_lookup(const Tensor& embeddings, std::span<const int> ids) {
  require_rank2(embeddings, "embedding_lookup");
  const std::size_t vocab = embeddings.dim(0), d = embeddings.dim(1);
  for (int id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= vocab) {
      std::ostringstream msg;
      msg << "embedding_lookup: id " << id << " out of range [0," << vocab
          << ")";
      throw IndexError(msg.str());
    }
  }
  std::vector<double> v(ids.size() * d);
  const auto& ev = embeddings.values();
  for (std::size_t i = 0; i < ids.size(); ++i)
    std::memcpy(&v[i * d], &ev[static_cast<std::size_t>(ids[i]) * d],
                d * sizeof(double));
  Tensor out = Tensor::from_values({ids.size(), d}, std::move(v));
  if (tracking({&embeddings})) {
    NodePtr en = embeddings.node(), on = out.node();
    std::vector<int> ids_copy(ids.begin(), ids.end());
    record(out, [en, on, ids_copy, d] {
      en->ensure_grad();
      for (std::size_t i = 0; i < ids_copy.size(); ++i) {
        double* dst = &en->grad[static_cast<std::size_t>(ids_copy[i]) * d];
        const double* src = &on->grad[i * d];
        for (std::size_t j = 0; j < d; ++j) dst[j] += src[j];
      }
    });
  }
  return out;
}

Tensor softmax(const Tensor& a, int axis) {
  const int rank = static_cast<int>(a.rank());
  if (axis < 0) axis += rank;
  if (axis < 0 || axis >= rank)
    throw ShapeError("softmax: invalid axis for " + shape_str(a.shape()));
  const Shape& s = a.shape();
  const std::size_t n = s[static_cast<std::size_t>(axis)];
  std::size_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= s[static_cast<std::size_t>(i)];
  for (int i = axis + 1; i < rank; ++i) inner *= s[static_cast<std::size_t>(i)];

  std::vector<double> v(a.numel());
  if (inner == 1) {
    kernels::softmax_rows(a.values().data(), v.data(), outer, n);
  } else {
    const auto& av = a.values();
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t in = 0; in < inner; ++in) {
        const std::size_t base = o * n * inner + in;
        double mx = av[base];
        for (std::size_t k = 1; k < n; ++k)
          mx = std::max(mx, av[base + k * inner]);
        double z = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
          const double e = std::exp(av[base + k * inner] - mx);
          v[base + k * inner] = e;
          z += e;
        }
        const double invz = 1.0 / z;
        for (std::size_t k = 0; k < n; ++k) v[base + k * inner] *= invz;
      }
    }
  }
  Tensor out = Tensor::from_values(a.shape(), std::move(v));
  if (tracking({&a})) {
    NodePtr an = a.node(), on = out.node();
    record(out, [an, on, outer, n, inner] {
      an->ensure_grad();
      for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t in = 0; in < inner; ++in) {
          const std::size_t base = o * n * inner + in;
          double dot = 0.0;
          for (std::size_t k = 0; k < n; ++k) {
            const std::size_t idx = base + k * inner;
            dot += on->grad[idx] * on->values[idx];
          }
          for (std::size_t k = 0; k < n; ++k) {
            const std::size_t idx = base + k * inner;
            an->grad[idx] += on->values[idx] * (on->grad[idx] - dot);
          }
        }
      }
    });
  }
  return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps) {
  if (x.rank() < 1) throw ShapeError("layer_norm: rank-0 input");
  const std::size_t n = x.shape().back();
  if (gamma.rank() != 1 || gamma.dim(0) != n || beta.rank() != 1 ||
      beta.dim(0) != n)
    throw ShapeError("layer_norm: gamma/beta " + shape_str(gamma.shape()) +
                     "/" + shape_str(beta.shape()) +
                     " do not match last dimension of " + shape_str(x.shape()));
  const std::size_t rows = x.numel() / n;
  const auto& xv = x.values();
  const auto& gv = gamma.values();
  const auto& bv = beta.values();

  std::vector<double> v(x.numel());
  auto xhat = std::make_shared<std::vector<double>>(x.numel());
  auto inv_std = std::make_shared<std::vector<double>>(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = &xv[r * n];
    double mean = 0.0;
    for (std::size_t j = 0; j < n; ++j) mean += row[j];
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double d = row[j] - mean;
      var += d * d;
    }
    var /= static_cast<double>(n);
    const double inv = 1.0 / std::sqrt(var + eps);
    (*inv_std)[r] = inv;
    for (std::size_t j = 0; j < n; ++j) {
      const double h = (row[j] - mean) * inv;
      (*xhat)[r * n + j] = h;
      v[r * n + j] = gv[j] * h + bv[j];
    }
  }
  Tensor out = Tensor::from_values(x.shape(), std::move(v));
  if (tracking({&x, &gamma, &beta})) {
    NodePtr xn = x.node(), gn = gamma.node(), bn = beta.node(),
            on = out.node();
    record(out, [xn, gn, bn, on, xhat, inv_std, rows, n] {
      for (std::size_t r = 0; r < rows; ++r) {
        const double* go = &on->grad[r * n];
        const double* h = &(*xhat)[r * n];
        if (gn->requires_grad) {
          gn->ensure_grad();
          for (std::size_t j = 0; j < n; ++j) gn->grad[j] += go[j] * h[j];
        }
        if (bn->requires_grad) {
          bn->ensure_grad();
          for (std::size_t j = 0; j < n; ++j) bn->grad[j] += go[j];
        }
        if (xn->requires_grad) {
          xn->ensure_grad();
          double m1 = 0.0, m2 = 0.0;
          for (std::size_t j = 0; j < n; ++j) {
            const double dh = go[j] * gn->values[j];
            m1 += dh;
            m2 += dh * h[j];
          }
          m1 /= static_cast<double>(n);
          m2 /= static_cast<double>(n);
          const double inv = (*inv_std)[r];
          for (std::size_t j = 0; j < n; ++j) {
            const double dh = go[j] * gn->values[j];
            xn->grad[r * n + j] += inv * (dh - m1 - h[j] * m2);
          }
        }
      }
    });
  }
  return out;
}

namespace {

double row_logsumexp(const double* row, std::size_t n) {
  double mx = row[0];
  for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, row[j]);
  double z = 0.0;
  for (std::size_t j = 0; j < n; ++j) z += std::exp(row[j] - mx);
  return mx + std::log(z);
}

void check_ce_inputs(const Tensor& logits, std::span<const int> targets,
                     int ignore_index) {
  require_rank2(logits, "cross_entropy_nll");
  if (targets.size() != logits.dim(0))
    throw ShapeError("cross_entropy_nll: " + std::to_string(targets.size()) +
                     " targets for " + std::to_string(logits.dim(0)) +
                     " logit rows");
  const auto vocab = static_cast<int>(logits.dim(1));
  for (int t : targets) {
    if (t == ignore_index) continue;
    if (t < 0 || t >= vocab)
      throw IndexError("cross_entropy_nll: target " + std::to_string(t) +
                       " out of range [0," + std::to_string(vocab) + ")");
  }
}

}  // namespace

Tensor cross_entropy_nll(const Tensor& logits, std::span<const int> targets,
                         int ignore_index) {
  check_ce_inputs(logits, targets, ignore_index);
  const std::size_t m = logits.dim(0), n = logits.dim(1);
  const auto& lv = logits.values();
  double loss = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < m; ++i) {
    if (targets[i] == ignore_index) continue;
    const double* row = &lv[i * n];
    loss += row_logsumexp(row, n) - row[static_cast<std::size_t>(targets[i])];
    ++count;
  }
  if (count == 0)
    throw DegenerateInputError("cross_entropy_nll: every position is ignored");
  Tensor out = Tensor::scalar(loss / static_cast<double>(count));
  if (tracking({&logits})) {
    NodePtr ln = logits.node(), on = out.node();
    std::vector<int> tgt(targets.begin(), targets.end());
    record(out, [ln, on, tgt, ignore_index, m, n, count] {
      ln->ensure_grad();
      const double g = on->grad[0] / static_cast<double>(count);
      std::vector<double> p(n);
      for (std::size_t i = 0; i < m; ++i) {
        if (tgt[i] == ignore_index) continue;
        kernels::serial::softmax_rows(&ln->values[i * n], p.data(), 1, n);
        double* gi = &ln->grad[i * n];
        for (std::size_t j = 0; j < n; ++j) gi[j] += g * p[j];
        gi[static_cast<std::size_t>(tgt[i])] -= g;
      }
    });
  }
  return out;
}

NllSum cross_entropy_sum(const Tensor& logits, std::span<const int> targets,
                         int ignore_index) {
  check_ce_inputs(logits, targets, ignore_index);
  const std::size_t m = logits.dim(0), n = logits.dim(1);
  const auto& lv = logits.values();
  NllSum r;
  for (std::size_t i = 0; i < m; ++i) {
    if (targets[i] == ignore_index) continue;
    const double* row = &lv[i * n];
    r.sum += row_logsumexp(row, n) - row[static_cast<std::size_t>(targets[i])];
    ++r.count;
  }
  return r;
}

Tensor dropout(const Tensor& a, double rate, Rng& rng) {
  if (rate < 0.0 || rate >= 1.0)
    throw ConfigError("dropout: rate must be in [0,1)");
  if (rate == 0.0) return a;
  const double keep_scale = 1.0 / (1.0 - rate);
  auto mask = std::make_shared<std::vector<double>>(a.numel());
  for (auto& x : *mask) x = rng.uniform() >= rate ? keep_scale : 0.0;
  std::vector<double> v(a.numel());
  const auto& av = a.values();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = av[i] * (*mask)[i];
  Tensor out = Tensor::from_values(a.shape(), std::move(v));
  if (tracking({&a})) {
    NodePtr an = a.node(), on = out.node();
    record(out, [an, on, mask] {
      an->ensure_grad();
      for (std::size_t i = 0; i < on->grad.size(); ++i)
        an->grad[i] += on->grad[i] * (*mask)[i];
    });
  }
  return out;
}

}  // namespace titlegen::tensor
