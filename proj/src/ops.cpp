#include "promptrec/ops.hpp"

#include <algorithm>
#include <cmath>

#include "promptrec/errors.hpp"

namespace promptrec {

namespace {

bool tracks(std::initializer_list<const Tensor*> inputs) {
  if (!grad_enabled()) return false;
  return std::any_of(inputs.begin(), inputs.end(), [](const Tensor* t) { return t->requires_grad(); });
}

bool tracks(const std::vector<Tensor>& inputs) {
  if (!grad_enabled()) return false;
  return std::any_of(inputs.begin(), inputs.end(), [](const Tensor& t) { return t.requires_grad(); });
}

Tensor make_output(Shape shape, bool track) { return Tensor::zeros(std::move(shape), track); }

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
}

double stable_sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  const std::size_t r = a.rows(), k = a.cols(), c = b.cols();
  if (b.rows() != k) {
    throw DimensionError("matmul: inner extents differ for " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  const bool track = tracks({&a, &b});
  Tensor out = make_output({r, c}, track);
  {
    auto A = a.data();
    auto B = b.data();
    auto O = out.data();
    for (std::size_t i = 0; i < r; ++i) {
      double* orow = &O[i * c];
      for (std::size_t p = 0; p < k; ++p) {
        const double av = A[i * k + p];
        if (av == 0.0) continue;
        const double* brow = &B[p * c];
        for (std::size_t j = 0; j < c; ++j) orow[j] += av * brow[j];
      }
    }
  }
  if (track) {
    Tape::current().record(out, {a, b}, [a, b, out, r, k, c]() mutable {
      auto G = out.grad();
      if (a.requires_grad()) {
        // dA = dOut . B^T
        auto B = b.data();
        auto GA = a.grad();
        for (std::size_t i = 0; i < r; ++i) {
          for (std::size_t p = 0; p < k; ++p) {
            double acc = 0.0;
            for (std::size_t j = 0; j < c; ++j) acc += G[i * c + j] * B[p * c + j];
            GA[i * k + p] += acc;
          }
        }
      }
      if (b.requires_grad()) {
        // dB = A^T . dOut
        auto A = a.data();
        auto GB = b.grad();
        for (std::size_t i = 0; i < r; ++i) {
          for (std::size_t p = 0; p < k; ++p) {
            const double av = A[i * k + p];
            if (av == 0.0) continue;
            for (std::size_t j = 0; j < c; ++j) GB[p * c + j] += av * G[i * c + j];
          }
        }
      }
    });
  }
  return out;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  const std::size_t r = a.rows(), k = a.cols(), c = b.rows();
  if (b.cols() != k) {
    throw DimensionError("matmul_nt: inner extents differ for " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()) + "^T");
  }
  const bool track = tracks({&a, &b});
  Tensor out = make_output({r, c}, track);
  {
    auto A = a.data();
    auto B = b.data();
    auto O = out.data();
    for (std::size_t i = 0; i < r; ++i) {
      for (std::size_t j = 0; j < c; ++j) {
        double acc = 0.0;
        for (std::size_t p = 0; p < k; ++p) acc += A[i * k + p] * B[j * k + p];
        O[i * c + j] = acc;
      }
    }
  }
  if (track) {
    Tape::current().record(out, {a, b}, [a, b, out, r, k, c]() mutable {
      auto G = out.grad();
      if (a.requires_grad()) {
        auto B = b.data();
        auto GA = a.grad();
        for (std::size_t i = 0; i < r; ++i) {
          for (std::size_t j = 0; j < c; ++j) {
            const double g = G[i * c + j];
            if (g == 0.0) continue;
            for (std::size_t p = 0; p < k; ++p) GA[i * k + p] += g * B[j * k + p];
          }
        }
      }
      if (b.requires_grad()) {
        auto A = a.data();
        auto GB = b.grad();
        for (std::size_t i = 0; i < r; ++i) {
          for (std::size_t j = 0; j < c; ++j) {
            const double g = G[i * c + j];
            if (g == 0.0) continue;
            for (std::size_t p = 0; p < k; ++p) GB[j * k + p] += g * A[i * k + p];
          }
        }
      }
    });
  }
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape("add", a, b);
  const bool track = tracks({&a, &b});
  Tensor out = make_output(a.shape(), track);
  auto O = out.data();
  auto A = a.data();
  auto B = b.data();
  for (std::size_t i = 0; i < O.size(); ++i) O[i] = A[i] + B[i];
  if (track) {
    Tape::current().record(out, {a, b}, [a, b, out]() mutable {
      auto G = out.grad();
      if (a.requires_grad()) {
        auto GA = a.grad();
        for (std::size_t i = 0; i < G.size(); ++i) GA[i] += G[i];
      }
      if (b.requires_grad()) {
        auto GB = b.grad();
        for (std::size_t i = 0; i < G.size(); ++i) GB[i] += G[i];
      }
    });
  }
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape("sub", a, b);
  const bool track = tracks({&a, &b});
  Tensor out = make_output(a.shape(), track);
  auto O = out.data();
  auto A = a.data();
  auto B = b.data();
  for (std::size_t i = 0; i < O.size(); ++i) O[i] = A[i] - B[i];
  if (track) {
    Tape::current().record(out, {a, b}, [a, b, out]() mutable {
      auto G = out.grad();
      if (a.requires_grad()) {
        auto GA = a.grad();
        for (std::size_t i = 0; i < G.size(); ++i) GA[i] += G[i];
      }
      if (b.requires_grad()) {
        auto GB = b.grad();
        for (std::size_t i = 0; i < G.size(); ++i) GB[i] -= G[i];
      }
    });
  }
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape("mul", a, b);
  const bool track = tracks({&a, &b});
  Tensor out = make_output(a.shape(), track);
  auto O = out.data();
  auto A = a.data();
  auto B = b.data();
  for (std::size_t i = 0; i < O.size(); ++i) O[i] = A[i] * B[i];
  if (track) {
    Tape::current().record(out, {a, b}, [a, b, out]() mutable {
      auto G = out.grad();
      if (a.requires_grad()) {
        auto GA = a.grad();
        auto B = b.data();
        for (std::size_t i = 0; i < G.size(); ++i) GA[i] += G[i] * B[i];
      }
      if (b.requires_grad()) {
        auto GB = b.grad();
        auto A = a.data();
        for (std::size_t i = 0; i < G.size(); ++i) GB[i] += G[i] * A[i];
      }
    });
  }
  return out;
}

Tensor scale(const Tensor& a, double s) {
  const bool track = tracks({&a});
  Tensor out = make_output(a.shape(), track);
  auto O = out.data();
  auto A = a.data();
  for (std::size_t i = 0; i < O.size(); ++i) O[i] = s * A[i];
  if (track) {
    Tape::current().record(out, {a}, [a, out, s]() mutable {
      auto G = out.grad();
      auto GA = a.grad();
      for (std::size_t i = 0; i < G.size(); ++i) GA[i] += s * G[i];
    });
  }
  return out;
}

Tensor relu(const Tensor& a) {
  const bool track = tracks({&a});
  Tensor out = make_output(a.shape(), track);
  auto O = out.data();
  auto A = a.data();
  for (std::size_t i = 0; i < O.size(); ++i) O[i] = A[i] > 0.0 ? A[i] : 0.0;
  if (track) {
    Tape::current().record(out, {a}, [a, out]() mutable {
      auto G = out.grad();
      auto GA = a.grad();
      auto A = a.data();
      for (std::size_t i = 0; i < G.size(); ++i) {
        if (A[i] > 0.0) GA[i] += G[i];
      }
    });
  }
  return out;
}

Tensor sigmoid(const Tensor& a) {
  const bool track = tracks({&a});
  Tensor out = make_output(a.shape(), track);
  auto O = out.data();
  auto A = a.data();
  for (std::size_t i = 0; i < O.size(); ++i) O[i] = stable_sigmoid(A[i]);
  if (track) {
    Tape::current().record(out, {a}, [a, out]() mutable {
      auto G = out.grad();
      auto O = out.data();
      auto GA = a.grad();
      for (std::size_t i = 0; i < G.size(); ++i) GA[i] += G[i] * O[i] * (1.0 - O[i]);
    });
  }
  return out;
}

Tensor log_sigmoid(const Tensor& a) {
  const bool track = tracks({&a});
  Tensor out = make_output(a.shape(), track);
  auto O = out.data();
  auto A = a.data();
  for (std::size_t i = 0; i < O.size(); ++i) {
    const double x = A[i];
    O[i] = std::min(x, 0.0) - std::log1p(std::exp(-std::abs(x)));
  }
  if (track) {
    Tape::current().record(out, {a}, [a, out]() mutable {
      auto G = out.grad();
      auto A = a.data();
      auto GA = a.grad();
      for (std::size_t i = 0; i < G.size(); ++i) GA[i] += G[i] * stable_sigmoid(-A[i]);
    });
  }
  return out;
}

Tensor mask(const Tensor& a, std::span<const double> pattern) {
  if (pattern.size() != a.numel()) {
    throw DimensionError("mask: pattern of " + std::to_string(pattern.size()) + " entries for tensor " +
                         shape_str(a.shape()));
  }
  const bool track = tracks({&a});
  Tensor out = make_output(a.shape(), track);
  auto O = out.data();
  auto A = a.data();
  for (std::size_t i = 0; i < O.size(); ++i) O[i] = A[i] * pattern[i];
  if (track) {
    std::vector<double> p(pattern.begin(), pattern.end());
    Tape::current().record(out, {a}, [a, out, p = std::move(p)]() mutable {
      auto G = out.grad();
      auto GA = a.grad();
      for (std::size_t i = 0; i < G.size(); ++i) GA[i] += G[i] * p[i];
    });
  }
  return out;
}

Tensor add_bias(const Tensor& a, const Tensor& bias) {
  const std::size_t r = a.rows(), c = a.cols();
  if (bias.numel() != c) {
    throw DimensionError("add_bias: bias " + shape_str(bias.shape()) + " does not match " + shape_str(a.shape()));
  }
  const bool track = tracks({&a, &bias});
  Tensor out = make_output(a.shape(), track);
  auto O = out.data();
  auto A = a.data();
  auto B = bias.data();
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < c; ++j) O[i * c + j] = A[i * c + j] + B[j];
  }
  if (track) {
    Tape::current().record(out, {a, bias}, [a, bias, out, r, c]() mutable {
      auto G = out.grad();
      if (a.requires_grad()) {
        auto GA = a.grad();
        for (std::size_t i = 0; i < G.size(); ++i) GA[i] += G[i];
      }
      if (bias.requires_grad()) {
        auto GB = bias.grad();
        for (std::size_t i = 0; i < r; ++i) {
          for (std::size_t j = 0; j < c; ++j) GB[j] += G[i * c + j];
        }
      }
    });
  }
  return out;
}

Tensor softmax_rows(const Tensor& a, const std::optional<Tensor>& additive_mask) {
  const std::size_t r = a.rows(), c = a.cols();
  if (additive_mask && additive_mask->shape() != a.shape()) {
    throw DimensionError("softmax_rows: mask " + shape_str(additive_mask->shape()) + " vs input " +
                         shape_str(a.shape()));
  }
  const bool track = tracks({&a});
  Tensor out = make_output(a.shape(), track);
  auto O = out.data();
  auto A = a.data();
  std::vector<double> logits(c);
  for (std::size_t i = 0; i < r; ++i) {
    bool any_open = !additive_mask;
    for (std::size_t j = 0; j < c; ++j) {
      double m = 0.0;
      if (additive_mask) {
        m = additive_mask->data()[i * c + j];
        if (m > kMaskedLogit / 2) any_open = true;
      }
      logits[j] = A[i * c + j] + m;
    }
    if (!any_open) throw NumericError("softmax_rows: row " + std::to_string(i) + " is fully masked");
    const double mx = *std::max_element(logits.begin(), logits.end());
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      O[i * c + j] = std::exp(logits[j] - mx);
      z += O[i * c + j];
    }
    for (std::size_t j = 0; j < c; ++j) O[i * c + j] /= z;
  }
  if (track) {
    Tape::current().record(out, {a}, [a, out, r, c]() mutable {
      auto G = out.grad();
      auto O = out.data();
      auto GA = a.grad();
      for (std::size_t i = 0; i < r; ++i) {
        double dot = 0.0;
        for (std::size_t j = 0; j < c; ++j) dot += G[i * c + j] * O[i * c + j];
        for (std::size_t j = 0; j < c; ++j) GA[i * c + j] += O[i * c + j] * (G[i * c + j] - dot);
      }
    });
  }
  return out;
}

Tensor log_softmax_rows(const Tensor& a) {
  const std::size_t r = a.rows(), c = a.cols();
  const bool track = tracks({&a});
  Tensor out = make_output(a.shape(), track);
  auto O = out.data();
  auto A = a.data();
  for (std::size_t i = 0; i < r; ++i) {
    double mx = A[i * c];
    for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, A[i * c + j]);
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) z += std::exp(A[i * c + j] - mx);
    const double lse = mx + std::log(z);
    for (std::size_t j = 0; j < c; ++j) O[i * c + j] = A[i * c + j] - lse;
  }
  if (track) {
    Tape::current().record(out, {a}, [a, out, r, c]() mutable {
      auto G = out.grad();
      auto O = out.data();
      auto GA = a.grad();
      for (std::size_t i = 0; i < r; ++i) {
        double gs = 0.0;
        for (std::size_t j = 0; j < c; ++j) gs += G[i * c + j];
        for (std::size_t j = 0; j < c; ++j) GA[i * c + j] += G[i * c + j] - std::exp(O[i * c + j]) * gs;
      }
    });
  }
  return out;
}

Tensor layer_norm(const Tensor& a, const Tensor& gain, const Tensor& bias, double eps) {
  const std::size_t r = a.rows(), d = a.cols();
  if (d < 2) throw DimensionError("layer_norm: needs at least 2 features, got " + shape_str(a.shape()));
  if (gain.numel() != d || bias.numel() != d) {
    throw DimensionError("layer_norm: gain/bias " + shape_str(gain.shape()) + "/" + shape_str(bias.shape()) +
                         " for input " + shape_str(a.shape()));
  }
  const bool track = tracks({&a, &gain, &bias});
  Tensor out = make_output(a.shape(), track);
  std::vector<double> xhat(r * d), inv_std(r);
  auto O = out.data();
  auto A = a.data();
  auto Gn = gain.data();
  auto Bs = bias.data();
  for (std::size_t i = 0; i < r; ++i) {
    double mu = 0.0;
    for (std::size_t j = 0; j < d; ++j) mu += A[i * d + j];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double t = A[i * d + j] - mu;
      var += t * t;
    }
    var /= static_cast<double>(d);
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < d; ++j) {
      xhat[i * d + j] = (A[i * d + j] - mu) * inv_std[i];
      O[i * d + j] = Gn[j] * xhat[i * d + j] + Bs[j];
    }
  }
  if (track) {
    Tape::current().record(out, {a, gain, bias},
                           [a, gain, bias, out, r, d, xhat = std::move(xhat), inv_std = std::move(inv_std)]() mutable {
                             auto G = out.grad();
                             auto Gn = gain.data();
                             if (gain.requires_grad() || bias.requires_grad()) {
                               for (std::size_t i = 0; i < r; ++i) {
                                 for (std::size_t j = 0; j < d; ++j) {
                                   if (gain.requires_grad()) gain.grad()[j] += G[i * d + j] * xhat[i * d + j];
                                   if (bias.requires_grad()) bias.grad()[j] += G[i * d + j];
                                 }
                               }
                             }
                             if (a.requires_grad()) {
                               auto GA = a.grad();
                               const double n = static_cast<double>(d);
                               for (std::size_t i = 0; i < r; ++i) {
                                 double s1 = 0.0, s2 = 0.0;
                                 for (std::size_t j = 0; j < d; ++j) {
                                   const double dx = G[i * d + j] * Gn[j];
                                   s1 += dx;
                                   s2 += dx * xhat[i * d + j];
                                 }
                                 for (std::size_t j = 0; j < d; ++j) {
                                   const double dx = G[i * d + j] * Gn[j];
                                   GA[i * d + j] += inv_std[i] / n * (n * dx - s1 - xhat[i * d + j] * s2);
                                 }
                               }
                             }
                           });
  }
  return out;
}

Tensor l2_normalize_rows(const Tensor& a) {
  const std::size_t r = a.rows(), c = a.cols();
  const bool track = tracks({&a});
  Tensor out = make_output(a.shape(), track);
  std::vector<double> norms(r);
  auto O = out.data();
  auto A = a.data();
  for (std::size_t i = 0; i < r; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) s += A[i * c + j] * A[i * c + j];
    norms[i] = std::sqrt(s);
    if (!(norms[i] > 0.0)) {
      throw NumericError("degenerate representation: row " + std::to_string(i) + " has zero norm");
    }
    for (std::size_t j = 0; j < c; ++j) O[i * c + j] = A[i * c + j] / norms[i];
  }
  if (track) {
    Tape::current().record(out, {a}, [a, out, r, c, norms = std::move(norms)]() mutable {
      auto G = out.grad();
      auto O = out.data();
      auto GA = a.grad();
      for (std::size_t i = 0; i < r; ++i) {
        double dot = 0.0;
        for (std::size_t j = 0; j < c; ++j) dot += G[i * c + j] * O[i * c + j];
        for (std::size_t j = 0; j < c; ++j) GA[i * c + j] += (G[i * c + j] - O[i * c + j] * dot) / norms[i];
      }
    });
  }
  return out;
}

Tensor embedding_lookup(const Tensor& table, std::span<const int> ids) {
  const std::size_t vocab = table.rows(), d = table.cols();
  if (ids.empty()) throw DimensionError("embedding_lookup: empty id list");
  for (int id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= vocab) {
      throw IndexError("embedding_lookup: id outside table of " + std::to_string(vocab) + " rows", id);
    }
  }
  const bool track = tracks({&table});
  Tensor out = make_output({ids.size(), d}, track);
  auto O = out.data();
  auto T = table.data();
  for (std::size_t i = 0; i < ids.size(); ++i) {
    std::copy_n(&T[static_cast<std::size_t>(ids[i]) * d], d, &O[i * d]);
  }
  if (track) {
    std::vector<int> idv(ids.begin(), ids.end());
    Tape::current().record(out, {table}, [table, out, d, idv = std::move(idv)]() mutable {
      auto G = out.grad();
      auto GT = table.grad();
      for (std::size_t i = 0; i < idv.size(); ++i) {
        const std::size_t base = static_cast<std::size_t>(idv[i]) * d;
        for (std::size_t j = 0; j < d; ++j) GT[base + j] += G[i * d + j];
      }
    });
  }
  return out;
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw DimensionError("concat_rows: no parts");
  const std::size_t c = parts.front().cols();
  std::size_t r = 0;
  for (const auto& p : parts) {
    if (p.cols() != c) {
      throw DimensionError("concat_rows: column mismatch " + shape_str(parts.front().shape()) + " vs " +
                           shape_str(p.shape()));
    }
    r += p.rows();
  }
  const bool track = tracks(parts);
  Tensor out = make_output({r, c}, track);
  auto O = out.data();
  std::size_t off = 0;
  for (const auto& p : parts) {
    std::copy(p.data().begin(), p.data().end(), O.begin() + static_cast<std::ptrdiff_t>(off));
    off += p.numel();
  }
  if (track) {
    Tape::current().record(out, parts, [parts, out]() mutable {
      auto G = out.grad();
      std::size_t off = 0;
      for (auto& p : parts) {
        if (p.requires_grad()) {
          auto GP = p.grad();
          for (std::size_t i = 0; i < GP.size(); ++i) GP[i] += G[off + i];
        }
        off += p.numel();
      }
    });
  }
  return out;
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no parts");
  const std::size_t r = parts.front().rows();
  std::size_t c = 0;
  for (const auto& p : parts) {
    if (p.rows() != r) {
      throw DimensionError("concat_cols: row mismatch " + shape_str(parts.front().shape()) + " vs " +
                           shape_str(p.shape()));
    }
    c += p.cols();
  }
  const bool track = tracks(parts);
  Tensor out = make_output({r, c}, track);
  auto O = out.data();
  std::size_t col = 0;
  for (const auto& p : parts) {
    const std::size_t pc = p.cols();
    auto P = p.data();
    for (std::size_t i = 0; i < r; ++i) {
      for (std::size_t j = 0; j < pc; ++j) O[i * c + col + j] = P[i * pc + j];
    }
    col += pc;
  }
  if (track) {
    Tape::current().record(out, parts, [parts, out, r, c]() mutable {
      auto G = out.grad();
      std::size_t col = 0;
      for (auto& p : parts) {
        const std::size_t pc = p.cols();
        if (p.requires_grad()) {
          auto GP = p.grad();
          for (std::size_t i = 0; i < r; ++i) {
            for (std::size_t j = 0; j < pc; ++j) GP[i * pc + j] += G[i * c + col + j];
          }
        }
        col += pc;
      }
    });
  }
  return out;
}

Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t count) {
  const std::size_t r = a.rows(), c = a.cols();
  if (count == 0 || begin + count > r) {
    throw DimensionError("slice_rows: [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                         ") outside " + shape_str(a.shape()));
  }
  const bool track = tracks({&a});
  Tensor out = make_output({count, c}, track);
  std::copy_n(a.data().begin() + static_cast<std::ptrdiff_t>(begin * c), count * c, out.data().begin());
  if (track) {
    Tape::current().record(out, {a}, [a, out, begin, c]() mutable {
      auto G = out.grad();
      auto GA = a.grad();
      for (std::size_t i = 0; i < G.size(); ++i) GA[begin * c + i] += G[i];
    });
  }
  return out;
}

Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t count) {
  const std::size_t r = a.rows(), c = a.cols();
  if (count == 0 || begin + count > c) {
    throw DimensionError("slice_cols: [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                         ") outside " + shape_str(a.shape()));
  }
  const bool track = tracks({&a});
  Tensor out = make_output({r, count}, track);
  auto O = out.data();
  auto A = a.data();
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < count; ++j) O[i * count + j] = A[i * c + begin + j];
  }
  if (track) {
    Tape::current().record(out, {a}, [a, out, r, c, begin, count]() mutable {
      auto G = out.grad();
      auto GA = a.grad();
      for (std::size_t i = 0; i < r; ++i) {
        for (std::size_t j = 0; j < count; ++j) GA[i * c + begin + j] += G[i * count + j];
      }
    });
  }
  return out;
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.numel()) {
    throw DimensionError("reshape: " + shape_str(a.shape()) + " to " + shape_str(shape));
  }
  const bool track = tracks({&a});
  Tensor out = Tensor::from(std::move(shape), std::vector<double>(a.data().begin(), a.data().end()), track);
  if (track) {
    Tape::current().record(out, {a}, [a, out]() mutable {
      auto G = out.grad();
      auto GA = a.grad();
      for (std::size_t i = 0; i < G.size(); ++i) GA[i] += G[i];
    });
  }
  return out;
}

Tensor take(const Tensor& a, std::span<const std::size_t> flat_indices) {
  if (flat_indices.empty()) throw DimensionError("take: empty index list");
  for (auto idx : flat_indices) {
    if (idx >= a.numel()) throw IndexError("take: index outside " + shape_str(a.shape()), static_cast<long long>(idx));
  }
  const bool track = tracks({&a});
  Tensor out = make_output({flat_indices.size()}, track);
  auto O = out.data();
  auto A = a.data();
  for (std::size_t i = 0; i < flat_indices.size(); ++i) O[i] = A[flat_indices[i]];
  if (track) {
    std::vector<std::size_t> idx(flat_indices.begin(), flat_indices.end());
    Tape::current().record(out, {a}, [a, out, idx = std::move(idx)]() mutable {
      auto G = out.grad();
      auto GA = a.grad();
      for (std::size_t i = 0; i < idx.size(); ++i) GA[idx[i]] += G[i];
    });
  }
  return out;
}

Tensor sum(const Tensor& a) {
  const bool track = tracks({&a});
  Tensor out = make_output({1}, track);
  double s = 0.0;
  for (double v : a.data()) s += v;
  out.data()[0] = s;
  if (track) {
    Tape::current().record(out, {a}, [a, out]() mutable {
      const double g = out.grad()[0];
      for (double& ga : a.grad()) ga += g;
    });
  }
  return out;
}

Tensor mean(const Tensor& a) { return scale(sum(a), 1.0 / static_cast<double>(a.numel())); }

Tensor row_sums(const Tensor& a) {
  const std::size_t r = a.rows(), c = a.cols();
  const bool track = tracks({&a});
  Tensor out = make_output({r, 1}, track);
  auto O = out.data();
  auto A = a.data();
  for (std::size_t i = 0; i < r; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) s += A[i * c + j];
    O[i] = s;
  }
  if (track) {
    Tape::current().record(out, {a}, [a, out, r, c]() mutable {
      auto G = out.grad();
      auto GA = a.grad();
      for (std::size_t i = 0; i < r; ++i) {
        for (std::size_t j = 0; j < c; ++j) GA[i * c + j] += G[i];
      }
    });
  }
  return out;
}

Tensor dropout(const Tensor& a, double rate, std::mt19937_64& rng) {
  if (rate < 0.0 || rate >= 1.0) throw ContractError("dropout: rate must lie in [0, 1)");
  if (rate == 0.0) return a;
  std::bernoulli_distribution keep(1.0 - rate);
  std::vector<double> pattern(a.numel());
  for (auto& p : pattern) p = keep(rng) ? 1.0 : 0.0;
  return scale(mask(a, pattern), 1.0 / (1.0 - rate));
}

}  // namespace promptrec
