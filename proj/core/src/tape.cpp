// SPDX-License-Identifier: Apache-2.0
#include "moep/tape.hpp"

#include <cmath>
#include <string>

namespace moep {

namespace {
void require(bool cond, const std::string& what) {
  if (!cond) throw ShapeError(what);
}
}  // namespace

Var Tape::push(Tensor value, std::function<void()> backward) {
  Node n;
  n.grad = Tensor::zeros(value.shape());
  n.value = std::move(value);
  n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

Var Tape::leaf(Tensor value) { return push(std::move(value)); }

Var Tape::matmul(Var a, Var b) {
  const Tensor& A = value(a);
  const Tensor& B = value(b);
  require(A.rank() == 2 && B.rank() == 2, "matmul needs rank-2 tensors");
  require(A.cols() == B.rows(), "matmul inner dimensions disagree: " + shape_str(A.shape()) +
                                    " x " + shape_str(B.shape()));
  const std::size_t m = A.rows(), k = A.cols(), n = B.cols();
  Tensor C({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double av = A.at(i, p);
      if (av == 0.0) continue;
      const double* brow = B.data() + p * n;
      double* crow = C.data() + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
  Var out = push(std::move(C), [this, a, b, out_idx = nodes_.size()] {
    const Tensor& dC = nodes_[out_idx].grad;
    const Tensor& A = nodes_[a.idx].value;
    const Tensor& B = nodes_[b.idx].value;
    Tensor& dA = nodes_[a.idx].grad;
    Tensor& dB = nodes_[b.idx].grad;
    const std::size_t m = A.rows(), k = A.cols(), n = B.cols();
    // dA += dC * B^T
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        const double g = dC.at(i, j);
        if (g == 0.0) continue;
        for (std::size_t p = 0; p < k; ++p) dA.at(i, p) += g * B.at(p, j);
      }
    }
    // dB += A^T * dC
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t p = 0; p < k; ++p) {
        const double av = A.at(i, p);
        if (av == 0.0) continue;
        const double* grow = dC.data() + i * n;
        double* drow = dB.data() + p * n;
        for (std::size_t j = 0; j < n; ++j) drow[j] += av * grow[j];
      }
    }
  });
  return out;
}

Var Tape::add(Var a, Var b) {
  const Tensor& A = value(a);
  const Tensor& B = value(b);
  require(A.same_shape(B), "add shapes disagree");
  Tensor C(A.shape());
  for (std::size_t i = 0; i < A.size(); ++i) C[i] = A[i] + B[i];
  return push(std::move(C), [this, a, b, out = nodes_.size()] {
    const Tensor& dC = nodes_[out].grad;
    Tensor& dA = nodes_[a.idx].grad;
    Tensor& dB = nodes_[b.idx].grad;
    for (std::size_t i = 0; i < dC.size(); ++i) {
      dA[i] += dC[i];
      dB[i] += dC[i];
    }
  });
}

Var Tape::mul(Var a, Var b) {
  const Tensor& A = value(a);
  const Tensor& B = value(b);
  require(A.same_shape(B), "mul shapes disagree");
  Tensor C(A.shape());
  for (std::size_t i = 0; i < A.size(); ++i) C[i] = A[i] * B[i];
  return push(std::move(C), [this, a, b, out = nodes_.size()] {
    const Tensor& dC = nodes_[out].grad;
    const Tensor& A = nodes_[a.idx].value;
    const Tensor& B = nodes_[b.idx].value;
    Tensor& dA = nodes_[a.idx].grad;
    Tensor& dB = nodes_[b.idx].grad;
    for (std::size_t i = 0; i < dC.size(); ++i) {
      dA[i] += dC[i] * B[i];
      dB[i] += dC[i] * A[i];
    }
  });
}

Var Tape::scale(Var a, double c) {
  const Tensor& A = value(a);
  Tensor C(A.shape());
  for (std::size_t i = 0; i < A.size(); ++i) C[i] = c * A[i];
  return push(std::move(C), [this, a, c, out = nodes_.size()] {
    const Tensor& dC = nodes_[out].grad;
    Tensor& dA = nodes_[a.idx].grad;
    for (std::size_t i = 0; i < dC.size(); ++i) dA[i] += c * dC[i];
  });
}

Var Tape::add_rowvec(Var a, Var bias) {
  const Tensor& A = value(a);
  const Tensor& B = value(bias);
  require(A.rank() == 2 && B.size() == A.cols(), "add_rowvec bias length mismatch");
  Tensor C(A.shape());
  const std::size_t n = A.rows(), m = A.cols();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) C.at(i, j) = A.at(i, j) + B[j];
  return push(std::move(C), [this, a, bias, out = nodes_.size()] {
    const Tensor& dC = nodes_[out].grad;
    Tensor& dA = nodes_[a.idx].grad;
    Tensor& dB = nodes_[bias.idx].grad;
    const std::size_t n = dC.rows(), m = dC.cols();
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < m; ++j) {
        dA.at(i, j) += dC.at(i, j);
        dB[j] += dC.at(i, j);
      }
  });
}

Var Tape::relu(Var a) {
  const Tensor& A = value(a);
  Tensor C(A.shape());
  for (std::size_t i = 0; i < A.size(); ++i) C[i] = A[i] > 0.0 ? A[i] : 0.0;
  return push(std::move(C), [this, a, out = nodes_.size()] {
    const Tensor& dC = nodes_[out].grad;
    const Tensor& A = nodes_[a.idx].value;
    Tensor& dA = nodes_[a.idx].grad;
    for (std::size_t i = 0; i < dC.size(); ++i)
      if (A[i] > 0.0) dA[i] += dC[i];
  });
}

Var Tape::gelu(Var a) {
  static constexpr double kC0 = 0.7978845608028654;  // sqrt(2/pi)
  static constexpr double kC1 = 0.044715;
  const Tensor& A = value(a);
  Tensor C(A.shape());
  for (std::size_t i = 0; i < A.size(); ++i) {
    const double x = A[i];
    C[i] = 0.5 * x * (1.0 + std::tanh(kC0 * (x + kC1 * x * x * x)));
  }
  return push(std::move(C), [this, a, out = nodes_.size()] {
    const Tensor& dC = nodes_[out].grad;
    const Tensor& A = nodes_[a.idx].value;
    Tensor& dA = nodes_[a.idx].grad;
    for (std::size_t i = 0; i < dC.size(); ++i) {
      const double x = A[i];
      const double t = std::tanh(kC0 * (x + kC1 * x * x * x));
      const double dg = kC0 * (1.0 + 3.0 * kC1 * x * x);
      dA[i] += dC[i] * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * dg);
    }
  });
}

Var Tape::layer_norm(Var a, Var gain, Var bias, double eps) {
  const Tensor& A = value(a);
  const Tensor& G = value(gain);
  const Tensor& B = value(bias);
  require(A.rank() == 2, "layer_norm needs rank-2 input");
  const std::size_t n = A.rows(), m = A.cols();
  require(G.size() == m && B.size() == m, "layer_norm gain/bias length mismatch");
  Tensor C({n, m});
  Tensor xhat({n, m});
  Tensor inv_std({n});
  for (std::size_t i = 0; i < n; ++i) {
    double mu = 0.0;
    for (std::size_t j = 0; j < m; ++j) mu += A.at(i, j);
    mu /= static_cast<double>(m);
    double var = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      const double d = A.at(i, j) - mu;
      var += d * d;
    }
    var /= static_cast<double>(m);
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[i] = is;
    for (std::size_t j = 0; j < m; ++j) {
      xhat.at(i, j) = (A.at(i, j) - mu) * is;
      C.at(i, j) = G[j] * xhat.at(i, j) + B[j];
    }
  }
  return push(std::move(C), [this, a, gain, bias, xh = std::move(xhat),
                             istd = std::move(inv_std), out = nodes_.size()] {
    const Tensor& dC = nodes_[out].grad;
    const Tensor& G = nodes_[gain.idx].value;
    Tensor& dA = nodes_[a.idx].grad;
    Tensor& dG = nodes_[gain.idx].grad;
    Tensor& dB = nodes_[bias.idx].grad;
    const std::size_t n = dC.rows(), m = dC.cols();
    for (std::size_t i = 0; i < n; ++i) {
      double sum_gd = 0.0, sum_gdx = 0.0;
      for (std::size_t j = 0; j < m; ++j) {
        const double gd = G[j] * dC.at(i, j);
        sum_gd += gd;
        sum_gdx += gd * xh.at(i, j);
        dG[j] += dC.at(i, j) * xh.at(i, j);
        dB[j] += dC.at(i, j);
      }
      const double mean_gd = sum_gd / static_cast<double>(m);
      const double mean_gdx = sum_gdx / static_cast<double>(m);
      for (std::size_t j = 0; j < m; ++j) {
        const double gd = G[j] * dC.at(i, j);
        dA.at(i, j) += (gd - mean_gd - xh.at(i, j) * mean_gdx) * istd[i];
      }
    }
  });
}

Var Tape::softmax_rows(Var a) {
  const Tensor& A = value(a);
  require(A.rank() == 2 && A.cols() >= 1, "softmax needs rank-2 non-empty rows");
  std::vector<bool> active(A.cols(), true);
  return masked_softmax_rows(a, active);
}

Var Tape::masked_softmax_rows(Var a, const std::vector<bool>& active) {
  const Tensor& A = value(a);
  require(A.rank() == 2, "softmax needs rank-2 input");
  const std::size_t n = A.rows(), m = A.cols();
  require(active.size() == m, "softmax mask length mismatch");
  std::vector<std::size_t> cols;
  for (std::size_t j = 0; j < m; ++j)
    if (active[j]) cols.push_back(j);
  require(!cols.empty(), "softmax needs at least one active column");
  Tensor C({n, m});
  for (std::size_t i = 0; i < n; ++i) {
    double mx = A.at(i, cols[0]);
    for (std::size_t j : cols) mx = std::max(mx, A.at(i, j));
    double denom = 0.0;
    for (std::size_t j : cols) {
      const double e = std::exp(A.at(i, j) - mx);
      C.at(i, j) = e;
      denom += e;
    }
    for (std::size_t j : cols) C.at(i, j) /= denom;
  }
  return push(std::move(C), [this, a, cols = std::move(cols), out = nodes_.size()] {
    const Tensor& dC = nodes_[out].grad;
    const Tensor& Y = nodes_[out].value;
    Tensor& dA = nodes_[a.idx].grad;
    const std::size_t n = dC.rows();
    for (std::size_t i = 0; i < n; ++i) {
      double dot = 0.0;
      for (std::size_t j : cols) dot += dC.at(i, j) * Y.at(i, j);
      for (std::size_t j : cols) dA.at(i, j) += Y.at(i, j) * (dC.at(i, j) - dot);
    }
  });
}

Var Tape::cross_entropy_mean(Var logits, std::span<const int> targets) {
  const Tensor& L = value(logits);
  require(L.rank() == 2, "cross_entropy needs rank-2 logits");
  const std::size_t n = L.rows(), c = L.cols();
  require(targets.size() == n, "cross_entropy target count mismatch");
  Tensor probs({n, c});
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double mx = L.at(i, 0);
    for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, L.at(i, j));
    double denom = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      probs.at(i, j) = std::exp(L.at(i, j) - mx);
      denom += probs.at(i, j);
    }
    for (std::size_t j = 0; j < c; ++j) probs.at(i, j) /= denom;
    const int t = targets[i];
    require(t >= 0 && static_cast<std::size_t>(t) < c, "cross_entropy target out of range");
    loss -= std::log(probs.at(i, static_cast<std::size_t>(t)));
  }
  loss /= static_cast<double>(n);
  std::vector<int> tgt(targets.begin(), targets.end());
  return push(Tensor::scalar(loss), [this, logits, probs = std::move(probs),
                                     tgt = std::move(tgt), out = nodes_.size()] {
    const double g = nodes_[out].grad[0];
    Tensor& dL = nodes_[logits.idx].grad;
    const std::size_t n = probs.rows(), c = probs.cols();
    const double inv_n = 1.0 / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < c; ++j) {
        double d = probs.at(i, j);
        if (j == static_cast<std::size_t>(tgt[i])) d -= 1.0;
        dL.at(i, j) += g * d * inv_n;
      }
  });
}

Var Tape::gather_rows(Var a, std::vector<std::size_t> rows) {
  const Tensor& A = value(a);
  require(A.rank() == 2, "gather_rows needs rank-2 input");
  const std::size_t m = A.cols();
  Tensor C({rows.size(), m});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    require(rows[i] < A.rows(), "gather_rows index out of range");
    for (std::size_t j = 0; j < m; ++j) C.at(i, j) = A.at(rows[i], j);
  }
  return push(std::move(C), [this, a, rows = std::move(rows), out = nodes_.size()] {
    const Tensor& dC = nodes_[out].grad;
    Tensor& dA = nodes_[a.idx].grad;
    const std::size_t m = dC.cols();
    for (std::size_t i = 0; i < rows.size(); ++i)
      for (std::size_t j = 0; j < m; ++j) dA.at(rows[i], j) += dC.at(i, j);
  });
}

Var Tape::scatter_rows(Var a, std::vector<std::size_t> rows, std::size_t total_rows) {
  const Tensor& A = value(a);
  require(A.rank() == 2 && A.rows() == rows.size(), "scatter_rows index count mismatch");
  const std::size_t m = A.cols();
  Tensor C({total_rows, m});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    require(rows[i] < total_rows, "scatter_rows index out of range");
    for (std::size_t j = 0; j < m; ++j) C.at(rows[i], j) = A.at(i, j);
  }
  return push(std::move(C), [this, a, rows = std::move(rows), out = nodes_.size()] {
    const Tensor& dC = nodes_[out].grad;
    Tensor& dA = nodes_[a.idx].grad;
    const std::size_t m = dC.cols();
    for (std::size_t i = 0; i < rows.size(); ++i)
      for (std::size_t j = 0; j < m; ++j) dA.at(i, j) += dC.at(rows[i], j);
  });
}

Var Tape::select_col(Var a, std::size_t col) {
  const Tensor& A = value(a);
  require(A.rank() == 2 && col < A.cols(), "select_col column out of range");
  Tensor C({A.rows(), 1});
  for (std::size_t i = 0; i < A.rows(); ++i) C.at(i, 0) = A.at(i, col);
  return push(std::move(C), [this, a, col, out = nodes_.size()] {
    const Tensor& dC = nodes_[out].grad;
    Tensor& dA = nodes_[a.idx].grad;
    for (std::size_t i = 0; i < dC.rows(); ++i) dA.at(i, col) += dC.at(i, 0);
  });
}

Var Tape::scale_rows(Var a, Var per_row) {
  const Tensor& A = value(a);
  const Tensor& S = value(per_row);
  require(A.rank() == 2 && S.rank() == 2 && S.rows() == A.rows() && S.cols() == 1,
          "scale_rows needs [n,m] and [n,1]");
  Tensor C(A.shape());
  const std::size_t n = A.rows(), m = A.cols();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) C.at(i, j) = A.at(i, j) * S.at(i, 0);
  return push(std::move(C), [this, a, per_row, out = nodes_.size()] {
    const Tensor& dC = nodes_[out].grad;
    const Tensor& A = nodes_[a.idx].value;
    const Tensor& S = nodes_[per_row.idx].value;
    Tensor& dA = nodes_[a.idx].grad;
    Tensor& dS = nodes_[per_row.idx].grad;
    const std::size_t n = dC.rows(), m = dC.cols();
    for (std::size_t i = 0; i < n; ++i) {
      double acc = 0.0;
      for (std::size_t j = 0; j < m; ++j) {
        dA.at(i, j) += dC.at(i, j) * S.at(i, 0);
        acc += dC.at(i, j) * A.at(i, j);
      }
      dS.at(i, 0) += acc;
    }
  });
}

Var Tape::weighted_col_mean(Var a, std::vector<double> weights) {
  const Tensor& A = value(a);
  require(A.rank() == 2 && weights.size() == A.cols(), "weighted_col_mean weight length mismatch");
  const std::size_t n = A.rows(), m = A.cols();
  double acc = 0.0;
  for (std::size_t j = 0; j < m; ++j) {
    double cs = 0.0;
    for (std::size_t i = 0; i < n; ++i) cs += A.at(i, j);
    acc += weights[j] * cs / static_cast<double>(n);
  }
  return push(Tensor::scalar(acc), [this, a, w = std::move(weights), out = nodes_.size()] {
    const double g = nodes_[out].grad[0];
    Tensor& dA = nodes_[a.idx].grad;
    const std::size_t n = dA.rows(), m = dA.cols();
    const double inv_n = 1.0 / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < m; ++j) dA.at(i, j) += g * w[j] * inv_n;
  });
}

Var Tape::seq_mean(Var a, std::size_t group) {
  const Tensor& A = value(a);
  require(A.rank() == 2 && group >= 1 && A.rows() % group == 0,
          "seq_mean row count not divisible by group");
  const std::size_t s = A.rows() / group, m = A.cols();
  Tensor C({s, m});
  for (std::size_t i = 0; i < s; ++i)
    for (std::size_t t = 0; t < group; ++t)
      for (std::size_t j = 0; j < m; ++j) C.at(i, j) += A.at(i * group + t, j);
  const double inv = 1.0 / static_cast<double>(group);
  for (std::size_t i = 0; i < C.size(); ++i) C[i] *= inv;
  return push(std::move(C), [this, a, group, out = nodes_.size()] {
    const Tensor& dC = nodes_[out].grad;
    Tensor& dA = nodes_[a.idx].grad;
    const std::size_t s = dC.rows(), m = dC.cols();
    const double inv = 1.0 / static_cast<double>(group);
    for (std::size_t i = 0; i < s; ++i)
      for (std::size_t t = 0; t < group; ++t)
        for (std::size_t j = 0; j < m; ++j) dA.at(i * group + t, j) += dC.at(i, j) * inv;
  });
}

Var Tape::repeat_rows(Var a, std::size_t repeat) {
  const Tensor& A = value(a);
  require(A.rank() == 2 && repeat >= 1, "repeat_rows needs rank-2 input");
  const std::size_t s = A.rows(), m = A.cols();
  Tensor C({s * repeat, m});
  for (std::size_t i = 0; i < s; ++i)
    for (std::size_t t = 0; t < repeat; ++t)
      for (std::size_t j = 0; j < m; ++j) C.at(i * repeat + t, j) = A.at(i, j);
  return push(std::move(C), [this, a, repeat, out = nodes_.size()] {
    const Tensor& dC = nodes_[out].grad;
    Tensor& dA = nodes_[a.idx].grad;
    const std::size_t s = dA.rows(), m = dA.cols();
    for (std::size_t i = 0; i < s; ++i)
      for (std::size_t t = 0; t < repeat; ++t)
        for (std::size_t j = 0; j < m; ++j) dA.at(i, j) += dC.at(i * repeat + t, j);
  });
}

void Tape::backward(Var loss) {
  require(value(loss).size() == 1, "backward seed must be scalar");
  grad_mut(loss)[0] = 1.0;
  for (std::size_t i = loss.idx + 1; i-- > 0;) {
    if (nodes_[i].backward) nodes_[i].backward();
  }
}

std::vector<int> argmax_rows(const Tensor& t) {
  std::vector<int> out(t.rows());
  for (std::size_t i = 0; i < t.rows(); ++i) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < t.cols(); ++j)
      if (t.at(i, j) > t.at(i, best)) best = j;
    out[i] = static_cast<int>(best);
  }
  return out;
}

int argmax_vec(std::span<const double> v) {
  std::size_t best = 0;
  for (std::size_t j = 1; j < v.size(); ++j)
    if (v[j] > v[best]) best = j;
  return static_cast<int>(best);
}

}  // namespace moep
