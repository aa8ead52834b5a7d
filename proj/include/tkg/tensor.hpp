#pragma once

#include <cassert>
#include <cmath>
#include <cstdint>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "tkg/error.hpp"
#include "tkg/rng.hpp"

namespace tkg {

// Dense row-major tensor. Production code instantiates S = float (32-bit
// storage, 64-bit accumulation inside reductions); tests also instantiate
// S = double so finite-difference oracles run on 64-bit shadow values.
template <typename S>
struct TensorT {
  std::vector<std::size_t> shape;
  std::vector<S> data;

  TensorT() = default;
  explicit TensorT(std::vector<std::size_t> shp) : shape(std::move(shp)) {
    data.assign(numel_of(shape), S(0));
  }

  static std::size_t numel_of(const std::vector<std::size_t>& shp) {
    std::size_t n = 1;
    for (std::size_t d : shp) n *= d;
    return n;
  }

  std::size_t numel() const { return data.size(); }
  std::size_t rank() const { return shape.size(); }
  std::size_t rows() const { return shape.empty() ? 1 : shape[0]; }
  std::size_t cols() const { return shape.size() < 2 ? 1 : shape[1]; }

  S& at(std::size_t r, std::size_t c) { return data[r * cols() + c]; }
  S at(std::size_t r, std::size_t c) const { return data[r * cols() + c]; }

  bool same_shape(const TensorT& other) const { return shape == other.shape; }

  std::string shape_str() const {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
      if (i) os << " x ";
      os << shape[i];
    }
    os << ']';
    return os.str();
  }

  static TensorT zeros(std::vector<std::size_t> shp) { return TensorT(std::move(shp)); }

  static TensorT from(std::vector<std::size_t> shp, std::vector<S> values) {
    TensorT t;
    t.shape = std::move(shp);
    t.data = std::move(values);
    assert(t.data.size() == numel_of(t.shape));
    return t;
  }

  static TensorT scalar(S v) { return from({1}, {v}); }

  bool all_finite() const {
    for (S v : data) {
      if (!std::isfinite(static_cast<double>(v))) return false;
    }
    return true;
  }
};

template <typename S>
[[noreturn]] inline void throw_shape(const char* op, const TensorT<S>& a,
                                     const TensorT<S>& b) {
  throw Error(ErrorKind::ShapeMismatch, std::string(op) + ": " + a.shape_str() +
                                            " vs " + b.shape_str());
}

template <typename S>
class TapeT;

// Handle to a node on a tape. Cheap to copy; valid while the tape lives.
template <typename S>
struct VarT {
  TapeT<S>* tape = nullptr;
  std::size_t id = 0;

  const TensorT<S>& value() const { return tape->node_value(id); }
  const std::vector<S>& grad() const { return tape->node_grad(id); }
};

// Reverse-mode tape. Nodes are appended in topological order during the
// forward pass; backward() walks them once in reverse, accumulating
// gradients additively at fan-out.
template <typename S>
class TapeT {
 public:
  VarT<S> leaf(TensorT<S> value, bool is_param = false) {
    Node n;
    n.value = std::move(value);
    n.is_param = is_param;
    nodes_.push_back(std::move(n));
    return {this, nodes_.size() - 1};
  }

  VarT<S> constant(TensorT<S> value) { return leaf(std::move(value), false); }

  VarT<S> op(TensorT<S> value, std::vector<std::size_t> parents,
             std::function<void(TapeT&, std::size_t)> backward) {
#ifndef NDEBUG
    assert(value.all_finite() && "non-finite forward value");
#endif
    Node n;
    n.value = std::move(value);
    n.parents = std::move(parents);
    n.backward = std::move(backward);
    nodes_.push_back(std::move(n));
    return {this, nodes_.size() - 1};
  }

  const TensorT<S>& node_value(std::size_t id) const { return nodes_[id].value; }
  TensorT<S>& mutable_value(std::size_t id) { return nodes_[id].value; }

  std::vector<S>& grad_buffer(std::size_t id) {
    Node& n = nodes_[id];
    if (n.grad.size() != n.value.numel()) n.grad.assign(n.value.numel(), S(0));
    return n.grad;
  }

  const std::vector<S>& node_grad(std::size_t id) const {
    static const std::vector<S> kEmpty;
    return nodes_[id].grad.empty() ? kEmpty : nodes_[id].grad;
  }

  // d(loss)/d(node) for every node reachable from `loss`. Loss must be a
  // scalar living on this tape.
  void backward(VarT<S> loss) {
    if (loss.tape != this) {
      throw Error(ErrorKind::NonScalarLoss, "loss is not on the active tape");
    }
    if (nodes_[loss.id].value.numel() != 1) {
      throw Error(ErrorKind::NonScalarLoss,
                  "loss must be scalar, got " + nodes_[loss.id].value.shape_str());
    }
    for (Node& n : nodes_) {
      if (!n.grad.empty()) n.grad.assign(n.grad.size(), S(0));
    }
    grad_buffer(loss.id)[0] = S(1);
    for (std::size_t i = loss.id + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (n.backward && !n.grad.empty()) n.backward(*this, i);
    }
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    TensorT<S> value;
    std::vector<S> grad;  // empty until touched
    std::vector<std::size_t> parents;
    std::function<void(TapeT&, std::size_t)> backward;
    bool is_param = false;
  };

  std::vector<Node> nodes_;
};

// ---------------------------------------------------------------------------
// Differentiable ops. Forward values are exact per definition; every op
// registers its backward rule on the tape. Reductions and matmul accumulate
// in double regardless of S.
// ---------------------------------------------------------------------------

template <typename S>
VarT<S> matmul(VarT<S> a, VarT<S> b) {
  const TensorT<S>& A = a.value();
  const TensorT<S>& B = b.value();
  if (A.rank() != 2 || B.rank() != 2 || A.shape[1] != B.shape[0]) {
    throw_shape("matmul", A, B);
  }
  const std::size_t m = A.shape[0], k = A.shape[1], n = B.shape[1];
  TensorT<S> out({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) {
        acc += static_cast<double>(A.data[i * k + p]) *
               static_cast<double>(B.data[p * n + j]);
      }
      out.data[i * n + j] = static_cast<S>(acc);
    }
  }
  return a.tape->op(std::move(out), {a.id, b.id},
                    [aid = a.id, bid = b.id, m, k, n](TapeT<S>& t, std::size_t self) {
                      const std::vector<S>& g = t.grad_buffer(self);
                      const TensorT<S>& A = t.node_value(aid);
                      const TensorT<S>& B = t.node_value(bid);
                      std::vector<S>& ga = t.grad_buffer(aid);
                      std::vector<S>& gb = t.grad_buffer(bid);
                      // dA = g * B^T, dB = A^T * g
                      for (std::size_t i = 0; i < m; ++i) {
                        for (std::size_t p = 0; p < k; ++p) {
                          double acc = 0.0;
                          for (std::size_t j = 0; j < n; ++j) {
                            acc += static_cast<double>(g[i * n + j]) *
                                   static_cast<double>(B.data[p * n + j]);
                          }
                          ga[i * k + p] += static_cast<S>(acc);
                        }
                      }
                      for (std::size_t p = 0; p < k; ++p) {
                        for (std::size_t j = 0; j < n; ++j) {
                          double acc = 0.0;
                          for (std::size_t i = 0; i < m; ++i) {
                            acc += static_cast<double>(A.data[i * k + p]) *
                                   static_cast<double>(g[i * n + j]);
                          }
                          gb[p * n + j] += static_cast<S>(acc);
                        }
                      }
                    });
}

template <typename S>
VarT<S> add(VarT<S> a, VarT<S> b) {
  const TensorT<S>& A = a.value();
  const TensorT<S>& B = b.value();
  if (!A.same_shape(B)) throw_shape("add", A, B);
  TensorT<S> out = A;
  for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] += B.data[i];
  return a.tape->op(std::move(out), {a.id, b.id},
                    [aid = a.id, bid = b.id](TapeT<S>& t, std::size_t self) {
                      const std::vector<S>& g = t.grad_buffer(self);
                      std::vector<S>& ga = t.grad_buffer(aid);
                      std::vector<S>& gb = t.grad_buffer(bid);
                      for (std::size_t i = 0; i < g.size(); ++i) {
                        ga[i] += g[i];
                        gb[i] += g[i];
                      }
                    });
}

template <typename S>
VarT<S> sub(VarT<S> a, VarT<S> b) {
  const TensorT<S>& A = a.value();
  const TensorT<S>& B = b.value();
  if (!A.same_shape(B)) throw_shape("sub", A, B);
  TensorT<S> out = A;
  for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] -= B.data[i];
  return a.tape->op(std::move(out), {a.id, b.id},
                    [aid = a.id, bid = b.id](TapeT<S>& t, std::size_t self) {
                      const std::vector<S>& g = t.grad_buffer(self);
                      std::vector<S>& ga = t.grad_buffer(aid);
                      std::vector<S>& gb = t.grad_buffer(bid);
                      for (std::size_t i = 0; i < g.size(); ++i) {
                        ga[i] += g[i];
                        gb[i] -= g[i];
                      }
                    });
}

// Scalar-with-tensor is the only broadcast this engine allows.
template <typename S>
VarT<S> scale(VarT<S> a, S c) {
  TensorT<S> out = a.value();
  for (S& v : out.data) v *= c;
  return a.tape->op(std::move(out), {a.id},
                    [aid = a.id, c](TapeT<S>& t, std::size_t self) {
                      const std::vector<S>& g = t.grad_buffer(self);
                      std::vector<S>& ga = t.grad_buffer(aid);
                      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * c;
                    });
}

template <typename S>
VarT<S> add_const(VarT<S> a, S c) {
  TensorT<S> out = a.value();
  for (S& v : out.data) v += c;
  return a.tape->op(std::move(out), {a.id},
                    [aid = a.id](TapeT<S>& t, std::size_t self) {
                      const std::vector<S>& g = t.grad_buffer(self);
                      std::vector<S>& ga = t.grad_buffer(aid);
                      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
                    });
}

// Adds the vector b to every row of the matrix a (explicit, not broadcast).
template <typename S>
VarT<S> add_rowvec(VarT<S> a, VarT<S> b) {
  const TensorT<S>& A = a.value();
  const TensorT<S>& B = b.value();
  if (A.rank() != 2 || B.rank() != 1 || A.shape[1] != B.shape[0]) {
    throw_shape("add_rowvec", A, B);
  }
  const std::size_t r = A.shape[0], c = A.shape[1];
  TensorT<S> out = A;
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < c; ++j) out.data[i * c + j] += B.data[j];
  }
  return a.tape->op(std::move(out), {a.id, b.id},
                    [aid = a.id, bid = b.id, r, c](TapeT<S>& t, std::size_t self) {
                      const std::vector<S>& g = t.grad_buffer(self);
                      std::vector<S>& ga = t.grad_buffer(aid);
                      std::vector<S>& gb = t.grad_buffer(bid);
                      for (std::size_t i = 0; i < r; ++i) {
                        for (std::size_t j = 0; j < c; ++j) {
                          ga[i * c + j] += g[i * c + j];
                          gb[j] += g[i * c + j];
                        }
                      }
                    });
}

template <typename S>
VarT<S> relu(VarT<S> a) {
  TensorT<S> out = a.value();
  for (S& v : out.data) v = v > S(0) ? v : S(0);
  return a.tape->op(std::move(out), {a.id},
                    [aid = a.id](TapeT<S>& t, std::size_t self) {
                      const std::vector<S>& g = t.grad_buffer(self);
                      const TensorT<S>& x = t.node_value(aid);
                      std::vector<S>& ga = t.grad_buffer(aid);
                      for (std::size_t i = 0; i < g.size(); ++i) {
                        if (x.data[i] > S(0)) ga[i] += g[i];
                      }
                    });
}

// Same kernel as relu; named form used by the hinge loss.
template <typename S>
VarT<S> max_with_zero(VarT<S> a) {
  return relu(a);
}

// Row-wise softmax over the last axis, max-shifted for stability.
template <typename S>
VarT<S> softmax(VarT<S> a) {
  const TensorT<S>& A = a.value();
  const std::size_t r = A.rank() == 1 ? 1 : A.shape[0];
  const std::size_t c = A.rank() == 1 ? A.shape[0] : A.shape[1];
  TensorT<S> out = A;
  for (std::size_t i = 0; i < r; ++i) {
    double mx = -1e300;
    for (std::size_t j = 0; j < c; ++j) {
      mx = std::max(mx, static_cast<double>(A.data[i * c + j]));
    }
    double sum = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      sum += std::exp(static_cast<double>(A.data[i * c + j]) - mx);
    }
    for (std::size_t j = 0; j < c; ++j) {
      out.data[i * c + j] = static_cast<S>(
          std::exp(static_cast<double>(A.data[i * c + j]) - mx) / sum);
    }
  }
  return a.tape->op(std::move(out), {a.id},
                    [aid = a.id, r, c](TapeT<S>& t, std::size_t self) {
                      const std::vector<S>& g = t.grad_buffer(self);
                      const TensorT<S>& y = t.node_value(self);
                      std::vector<S>& ga = t.grad_buffer(aid);
                      // dx_j = y_j * (g_j - sum_k g_k y_k) per row
                      for (std::size_t i = 0; i < r; ++i) {
                        double dot = 0.0;
                        for (std::size_t j = 0; j < c; ++j) {
                          dot += static_cast<double>(g[i * c + j]) *
                                 static_cast<double>(y.data[i * c + j]);
                        }
                        for (std::size_t j = 0; j < c; ++j) {
                          ga[i * c + j] += static_cast<S>(
                              static_cast<double>(y.data[i * c + j]) *
                              (static_cast<double>(g[i * c + j]) - dot));
                        }
                      }
                    });
}

// Mean over axis 0: [r x c] -> [c], or [n] -> scalar.
template <typename S>
VarT<S> mean_axis0(VarT<S> a) {
  const TensorT<S>& A = a.value();
  TensorT<S> out;
  std::size_t groups, width;
  if (A.rank() == 1) {
    out = TensorT<S>({1});
    groups = A.shape[0];
    width = 1;
  } else {
    out = TensorT<S>({A.shape[1]});
    groups = A.shape[0];
    width = A.shape[1];
  }
  for (std::size_t j = 0; j < width; ++j) {
    double acc = 0.0;
    for (std::size_t i = 0; i < groups; ++i) {
      acc += static_cast<double>(A.data[i * width + j]);
    }
    out.data[j] = static_cast<S>(acc / static_cast<double>(groups));
  }
  return a.tape->op(std::move(out), {a.id},
                    [aid = a.id, groups, width](TapeT<S>& t, std::size_t self) {
                      const std::vector<S>& g = t.grad_buffer(self);
                      std::vector<S>& ga = t.grad_buffer(aid);
                      const S inv = S(1) / static_cast<S>(groups);
                      for (std::size_t i = 0; i < groups; ++i) {
                        for (std::size_t j = 0; j < width; ++j) {
                          ga[i * width + j] += g[j] * inv;
                        }
                      }
                    });
}

template <typename S>
VarT<S> sum_all(VarT<S> a) {
  const TensorT<S>& A = a.value();
  double acc = 0.0;
  for (S v : A.data) acc += static_cast<double>(v);
  TensorT<S> out = TensorT<S>::scalar(static_cast<S>(acc));
  return a.tape->op(std::move(out), {a.id},
                    [aid = a.id](TapeT<S>& t, std::size_t self) {
                      const std::vector<S>& g = t.grad_buffer(self);
                      std::vector<S>& ga = t.grad_buffer(aid);
                      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[0];
                    });
}

template <typename S>
VarT<S> mean_all(VarT<S> a) {
  const std::size_t n = a.value().numel();
  return scale(sum_all(a), S(1) / static_cast<S>(n));
}

template <typename S>
VarT<S> transpose(VarT<S> a) {
  const TensorT<S>& A = a.value();
  if (A.rank() != 2) {
    throw Error(ErrorKind::ShapeMismatch, "transpose needs rank 2, got " + A.shape_str());
  }
  const std::size_t r = A.shape[0], c = A.shape[1];
  TensorT<S> out({c, r});
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < c; ++j) out.data[j * r + i] = A.data[i * c + j];
  }
  return a.tape->op(std::move(out), {a.id},
                    [aid = a.id, r, c](TapeT<S>& t, std::size_t self) {
                      const std::vector<S>& g = t.grad_buffer(self);
                      std::vector<S>& ga = t.grad_buffer(aid);
                      for (std::size_t i = 0; i < r; ++i) {
                        for (std::size_t j = 0; j < c; ++j) {
                          ga[i * c + j] += g[j * r + i];
                        }
                      }
                    });
}

// Row-major reinterpretation; data order unchanged, backward is identity.
template <typename S>
VarT<S> reshape(VarT<S> a, std::vector<std::size_t> shape) {
  const TensorT<S>& A = a.value();
  if (TensorT<S>::numel_of(shape) != A.numel()) {
    TensorT<S> want(shape);
    throw_shape("reshape", A, want);
  }
  TensorT<S> out = A;
  out.shape = std::move(shape);
  return a.tape->op(std::move(out), {a.id},
                    [aid = a.id](TapeT<S>& t, std::size_t self) {
                      const std::vector<S>& g = t.grad_buffer(self);
                      std::vector<S>& ga = t.grad_buffer(aid);
                      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
                    });
}

// Concatenation along the last axis. Vectors concatenate end to end;
// matrices must agree on row count.
template <typename S>
VarT<S> concat_cols(const std::vector<VarT<S>>& parts) {
  assert(!parts.empty());
  TapeT<S>* tape = parts[0].tape;
  const std::size_t rank = parts[0].value().rank();
  const std::size_t rows = rank == 2 ? parts[0].value().shape[0] : 1;
  std::size_t total = 0;
  for (const VarT<S>& p : parts) {
    const TensorT<S>& V = p.value();
    if (V.rank() != rank || (rank == 2 && V.shape[0] != rows)) {
      throw_shape("concat_cols", parts[0].value(), V);
    }
    total += rank == 2 ? V.shape[1] : V.shape[0];
  }
  TensorT<S> out(rank == 2 ? std::vector<std::size_t>{rows, total}
                           : std::vector<std::size_t>{total});
  std::vector<std::size_t> parent_ids;
  std::vector<std::size_t> widths;
  std::size_t off = 0;
  for (const VarT<S>& p : parts) {
    const TensorT<S>& V = p.value();
    const std::size_t w = rank == 2 ? V.shape[1] : V.shape[0];
    for (std::size_t i = 0; i < rows; ++i) {
      for (std::size_t j = 0; j < w; ++j) {
        out.data[i * total + off + j] = V.data[i * w + j];
      }
    }
    parent_ids.push_back(p.id);
    widths.push_back(w);
    off += w;
  }
  return tape->op(std::move(out), parent_ids,
                  [parent_ids, widths, rows, total](TapeT<S>& t, std::size_t self) {
                    const std::vector<S>& g = t.grad_buffer(self);
                    std::size_t off = 0;
                    for (std::size_t k = 0; k < parent_ids.size(); ++k) {
                      std::vector<S>& gp = t.grad_buffer(parent_ids[k]);
                      for (std::size_t i = 0; i < rows; ++i) {
                        for (std::size_t j = 0; j < widths[k]; ++j) {
                          gp[i * widths[k] + j] += g[i * total + off + j];
                        }
                      }
                      off += widths[k];
                    }
                  });
}

template <typename S>
VarT<S> concat_cols(VarT<S> a, VarT<S> b) {
  return concat_cols(std::vector<VarT<S>>{a, b});
}

// Stacks equal-length vectors (or equal-width matrices) along axis 0.
template <typename S>
VarT<S> concat_rows(const std::vector<VarT<S>>& parts) {
  assert(!parts.empty());
  TapeT<S>* tape = parts[0].tape;
  const std::size_t width = parts[0].value().rank() == 1
                                ? parts[0].value().shape[0]
                                : parts[0].value().shape[1];
  std::size_t rows = 0;
  for (const VarT<S>& p : parts) {
    const TensorT<S>& V = p.value();
    const std::size_t w = V.rank() == 1 ? V.shape[0] : V.shape[1];
    if (w != width) throw_shape("concat_rows", parts[0].value(), V);
    rows += V.rank() == 1 ? 1 : V.shape[0];
  }
  TensorT<S> out({rows, width});
  std::vector<std::size_t> parent_ids;
  std::vector<std::size_t> counts;
  std::size_t off = 0;
  for (const VarT<S>& p : parts) {
    const TensorT<S>& V = p.value();
    for (std::size_t i = 0; i < V.numel(); ++i) out.data[off + i] = V.data[i];
    parent_ids.push_back(p.id);
    counts.push_back(V.numel());
    off += V.numel();
  }
  return tape->op(std::move(out), parent_ids,
                  [parent_ids, counts](TapeT<S>& t, std::size_t self) {
                    const std::vector<S>& g = t.grad_buffer(self);
                    std::size_t off = 0;
                    for (std::size_t k = 0; k < parent_ids.size(); ++k) {
                      std::vector<S>& gp = t.grad_buffer(parent_ids[k]);
                      for (std::size_t i = 0; i < counts[k]; ++i) {
                        gp[i] += g[off + i];
                      }
                      off += counts[k];
                    }
                  });
}

// Columns [from, to) of a matrix, or the slice of a vector.
template <typename S>
VarT<S> slice_cols(VarT<S> a, std::size_t from, std::size_t to) {
  const TensorT<S>& A = a.value();
  const std::size_t rows = A.rank() == 2 ? A.shape[0] : 1;
  const std::size_t cols = A.rank() == 2 ? A.shape[1] : A.shape[0];
  assert(from <= to && to <= cols);
  const std::size_t w = to - from;
  TensorT<S> out(A.rank() == 2 ? std::vector<std::size_t>{rows, w}
                               : std::vector<std::size_t>{w});
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < w; ++j) {
      out.data[i * w + j] = A.data[i * cols + from + j];
    }
  }
  return a.tape->op(std::move(out), {a.id},
                    [aid = a.id, from, rows, cols, w](TapeT<S>& t, std::size_t self) {
                      const std::vector<S>& g = t.grad_buffer(self);
                      std::vector<S>& ga = t.grad_buffer(aid);
                      for (std::size_t i = 0; i < rows; ++i) {
                        for (std::size_t j = 0; j < w; ++j) {
                          ga[i * cols + from + j] += g[i * w + j];
                        }
                      }
                    });
}

// Gathers rows of an embedding table; gradient scatter-adds into the table.
template <typename S>
VarT<S> embedding_lookup(VarT<S> table, const std::vector<std::uint32_t>& ids) {
  const TensorT<S>& T = table.value();
  if (T.rank() != 2) {
    throw Error(ErrorKind::ShapeMismatch,
                "embedding_lookup table must be rank 2, got " + T.shape_str());
  }
  const std::size_t d = T.shape[1];
  TensorT<S> out({ids.size(), d});
  for (std::size_t i = 0; i < ids.size(); ++i) {
    assert(ids[i] < T.shape[0]);
    for (std::size_t j = 0; j < d; ++j) {
      out.data[i * d + j] = T.data[ids[i] * d + j];
    }
  }
  return table.tape->op(std::move(out), {table.id},
                        [tid = table.id, ids, d](TapeT<S>& t, std::size_t self) {
                          const std::vector<S>& g = t.grad_buffer(self);
                          std::vector<S>& gt = t.grad_buffer(tid);
                          for (std::size_t i = 0; i < ids.size(); ++i) {
                            for (std::size_t j = 0; j < d; ++j) {
                              gt[ids[i] * d + j] += g[i * d + j];
                            }
                          }
                        });
}

template <typename S>
VarT<S> dot(VarT<S> a, VarT<S> b) {
  const TensorT<S>& A = a.value();
  const TensorT<S>& B = b.value();
  if (!A.same_shape(B) || A.rank() != 1) throw_shape("dot", A, B);
  double acc = 0.0;
  for (std::size_t i = 0; i < A.numel(); ++i) {
    acc += static_cast<double>(A.data[i]) * static_cast<double>(B.data[i]);
  }
  TensorT<S> out = TensorT<S>::scalar(static_cast<S>(acc));
  return a.tape->op(std::move(out), {a.id, b.id},
                    [aid = a.id, bid = b.id](TapeT<S>& t, std::size_t self) {
                      const std::vector<S>& g = t.grad_buffer(self);
                      const TensorT<S>& A = t.node_value(aid);
                      const TensorT<S>& B = t.node_value(bid);
                      std::vector<S>& ga = t.grad_buffer(aid);
                      std::vector<S>& gb = t.grad_buffer(bid);
                      for (std::size_t i = 0; i < A.numel(); ++i) {
                        ga[i] += g[0] * B.data[i];
                        gb[i] += g[0] * A.data[i];
                      }
                    });
}

// Per-row layer norm with learned gain and bias (population variance,
// eps inside the square root).
template <typename S>
VarT<S> layer_norm(VarT<S> x, VarT<S> gain, VarT<S> bias, S eps = S(1e-5)) {
  const TensorT<S>& X = x.value();
  const TensorT<S>& G = gain.value();
  const TensorT<S>& B = bias.value();
  const std::size_t r = X.rank() == 2 ? X.shape[0] : 1;
  const std::size_t c = X.rank() == 2 ? X.shape[1] : X.shape[0];
  if (G.rank() != 1 || G.shape[0] != c) throw_shape("layer_norm gain", X, G);
  if (B.rank() != 1 || B.shape[0] != c) throw_shape("layer_norm bias", X, B);
  TensorT<S> out = X;
  for (std::size_t i = 0; i < r; ++i) {
    double mu = 0.0;
    for (std::size_t j = 0; j < c; ++j) mu += static_cast<double>(X.data[i * c + j]);
    mu /= static_cast<double>(c);
    double var = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      const double dv = static_cast<double>(X.data[i * c + j]) - mu;
      var += dv * dv;
    }
    var /= static_cast<double>(c);
    const double inv = 1.0 / std::sqrt(var + static_cast<double>(eps));
    for (std::size_t j = 0; j < c; ++j) {
      const double xn = (static_cast<double>(X.data[i * c + j]) - mu) * inv;
      out.data[i * c + j] = static_cast<S>(xn * static_cast<double>(G.data[j]) +
                                           static_cast<double>(B.data[j]));
    }
  }
  return x.tape->op(
      std::move(out), {x.id, gain.id, bias.id},
      [xid = x.id, gid = gain.id, bid = bias.id, r, c, eps](TapeT<S>& t,
                                                            std::size_t self) {
        const std::vector<S>& g = t.grad_buffer(self);
        const TensorT<S>& X = t.node_value(xid);
        const TensorT<S>& G = t.node_value(gid);
        std::vector<S>& gx = t.grad_buffer(xid);
        std::vector<S>& gg = t.grad_buffer(gid);
        std::vector<S>& gb = t.grad_buffer(bid);
        for (std::size_t i = 0; i < r; ++i) {
          double mu = 0.0;
          for (std::size_t j = 0; j < c; ++j) mu += static_cast<double>(X.data[i * c + j]);
          mu /= static_cast<double>(c);
          double var = 0.0;
          for (std::size_t j = 0; j < c; ++j) {
            const double dv = static_cast<double>(X.data[i * c + j]) - mu;
            var += dv * dv;
          }
          var /= static_cast<double>(c);
          const double inv = 1.0 / std::sqrt(var + static_cast<double>(eps));
          // dL/dxhat_j = g_j * gain_j; then the standard layer-norm pullback.
          double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
          for (std::size_t j = 0; j < c; ++j) {
            const double xhat = (static_cast<double>(X.data[i * c + j]) - mu) * inv;
            const double dxhat = static_cast<double>(g[i * c + j]) *
                                 static_cast<double>(G.data[j]);
            sum_dxhat += dxhat;
            sum_dxhat_xhat += dxhat * xhat;
            gg[j] += static_cast<S>(static_cast<double>(g[i * c + j]) * xhat);
            gb[j] += g[i * c + j];
          }
          for (std::size_t j = 0; j < c; ++j) {
            const double xhat = (static_cast<double>(X.data[i * c + j]) - mu) * inv;
            const double dxhat = static_cast<double>(g[i * c + j]) *
                                 static_cast<double>(G.data[j]);
            const double dx = inv * (dxhat - sum_dxhat / static_cast<double>(c) -
                                     xhat * sum_dxhat_xhat / static_cast<double>(c));
            gx[i * c + j] += static_cast<S>(dx);
          }
        }
      });
}

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

template <typename S>
struct AdamStateT {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double learning_rate = 0.001;
  std::uint64_t step = 0;
  std::vector<std::vector<S>> m;  // first moments, one per parameter
  std::vector<std::vector<S>> v;  // second moments

  void init(const std::vector<TensorT<S>*>& params, double lr) {
    learning_rate = lr;
    step = 0;
    m.clear();
    v.clear();
    for (const TensorT<S>* p : params) {
      m.emplace_back(p->numel(), S(0));
      v.emplace_back(p->numel(), S(0));
    }
  }
};

// One bias-corrected Adam update. `grads[i]` must shape-match `params[i]`.
template <typename S>
void adam_step(const std::vector<TensorT<S>*>& params,
               const std::vector<const std::vector<S>*>& grads,
               AdamStateT<S>& state) {
  if (params.size() != grads.size() || params.size() != state.m.size()) {
    throw Error(ErrorKind::ShapeMismatch, "adam_step: parameter/gradient count mismatch");
  }
  state.step += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t p = 0; p < params.size(); ++p) {
    TensorT<S>& w = *params[p];
    const std::vector<S>& g = *grads[p];
    if (g.size() != w.numel()) {
      throw Error(ErrorKind::ShapeMismatch, "adam_step: gradient size mismatch for parameter " +
                                                std::to_string(p));
    }
    std::vector<S>& m = state.m[p];
    std::vector<S>& v = state.v[p];
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double gi = static_cast<double>(g[i]);
      const double mi = state.beta1 * static_cast<double>(m[i]) + (1.0 - state.beta1) * gi;
      const double vi = state.beta2 * static_cast<double>(v[i]) + (1.0 - state.beta2) * gi * gi;
      m[i] = static_cast<S>(mi);
      v[i] = static_cast<S>(vi);
      const double mhat = mi / bc1;
      const double vhat = vi / bc2;
      w.data[i] = static_cast<S>(static_cast<double>(w.data[i]) -
                                 state.learning_rate * mhat /
                                     (std::sqrt(vhat) + state.epsilon));
    }
  }
}

// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) initializer.
template <typename S>
TensorT<S> init_uniform(std::vector<std::size_t> shape, std::size_t fan_in, Rng& rng) {
  TensorT<S> t(std::move(shape));
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (S& v : t.data) v = static_cast<S>(rng_uniform(rng, -bound, bound));
  return t;
}

using Tensor = TensorT<float>;
using Tape = TapeT<float>;
using Var = VarT<float>;
using AdamState = AdamStateT<float>;

// Tensor archive I/O ("TKGT1\n" magic, little-endian, f32 payloads).
struct NamedTensor {
  std::string name;
  Tensor tensor;
};

void save_tensor_archive(const std::string& path,
                         const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> load_tensor_archive(const std::string& path);

}  // namespace tkg
