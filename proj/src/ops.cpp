#include "neighcnn/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "neighcnn/error.hpp"

namespace neighcnn {

namespace {

using detail::Node;

// Parent i of `out`, or nullptr if it does not need a gradient.
Node* grad_target(Node& out, std::size_t i) {
  Node* p = out.parents[i].get();
  return p->requires_grad ? p : nullptr;
}

const Tensor& input_value(const Node& out, std::size_t i) { return out.parents[i]->value; }

void require_rank4(const Shape& s, const char* what) {
  if (s.rank() != 4) throw ShapeError(std::string(what) + ": expected rank 4, got " + s.str());
}

template <typename F>
Var unary(const Var& a, const char* op, F forward, std::function<void(Node&)> backward) {
  Tensor out(a.shape());
  auto src = a.value().data();
  auto dst = out.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = forward(src[i]);
  return make_result(std::move(out), op, {a}, std::move(backward));
}

}  // namespace

// ---- elementwise -----------------------------------------------------------

Var add(const Var& a, const Var& b) {
  require_same_shape(a.shape(), b.shape(), "add");
  Tensor out(a.shape());
  auto x = a.value().data(), y = b.value().data();
  auto o = out.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] + y[i];
  return make_result(std::move(out), "add", {a, b}, [](Node& n) {
    if (Node* p = grad_target(n, 0)) p->accumulate(n.grad);
    if (Node* p = grad_target(n, 1)) p->accumulate(n.grad);
  });
}

Var sub(const Var& a, const Var& b) {
  require_same_shape(a.shape(), b.shape(), "subtract");
  Tensor out(a.shape());
  auto x = a.value().data(), y = b.value().data();
  auto o = out.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] - y[i];
  return make_result(std::move(out), "subtract", {a, b}, [](Node& n) {
    if (Node* p = grad_target(n, 0)) p->accumulate(n.grad);
    if (Node* p = grad_target(n, 1)) {
      auto g = p->grad_buffer().data();
      auto src = n.grad.data();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= src[i];
    }
  });
}

Var mul(const Var& a, const Var& b) {
  require_same_shape(a.shape(), b.shape(), "multiply");
  Tensor out(a.shape());
  auto x = a.value().data(), y = b.value().data();
  auto o = out.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] * y[i];
  return make_result(std::move(out), "multiply", {a, b}, [](Node& n) {
    auto src = n.grad.data();
    if (Node* p = grad_target(n, 0)) {
      auto other = input_value(n, 1).data();
      auto g = p->grad_buffer().data();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += src[i] * other[i];
    }
    if (Node* p = grad_target(n, 1)) {
      auto other = input_value(n, 0).data();
      auto g = p->grad_buffer().data();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += src[i] * other[i];
    }
  });
}

Var square(const Var& a) {
  return unary(a, "square", [](double x) { return x * x; }, [](Node& n) {
    Node* p = grad_target(n, 0);
    if (!p) return;
    auto x = input_value(n, 0).data();
    auto src = n.grad.data();
    auto g = p->grad_buffer().data();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += 2.0 * x[i] * src[i];
  });
}

Var scale(const Var& a, double factor) {
  return unary(a, "scalar_mul", [factor](double x) { return factor * x; }, [factor](Node& n) {
    Node* p = grad_target(n, 0);
    if (!p) return;
    auto src = n.grad.data();
    auto g = p->grad_buffer().data();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += factor * src[i];
  });
}

Var add_scalar(const Var& a, double offset) {
  return unary(a, "add_scalar", [offset](double x) { return x + offset; }, [](Node& n) {
    if (Node* p = grad_target(n, 0)) p->accumulate(n.grad);
  });
}

Var sqrt(const Var& a) {
  for (double v : a.value().data()) {
    if (v < 0.0) throw InvalidArgument("sqrt of negative value " + std::to_string(v));
  }
  return unary(a, "sqrt", [](double x) { return std::sqrt(x); }, [](Node& n) {
    Node* p = grad_target(n, 0);
    if (!p) return;
    auto root = n.value.data();
    auto src = n.grad.data();
    auto g = p->grad_buffer().data();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += src[i] / (2.0 * root[i] + kSqrtGradGuard);
  });
}

Var relu(const Var& a) {
  return unary(a, "relu", [](double x) { return x > 0.0 ? x : 0.0; }, [](Node& n) {
    Node* p = grad_target(n, 0);
    if (!p) return;
    auto x = input_value(n, 0).data();
    auto src = n.grad.data();
    auto g = p->grad_buffer().data();
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (x[i] > 0.0) g[i] += src[i];
    }
  });
}

// ---- reductions ------------------------------------------------------------

namespace {

struct ReductionPlan {
  Shape out_shape;
  // For each input element, its output slot.
  std::vector<std::size_t> slot;
  std::size_t count = 1;  // elements folded into each output
};

ReductionPlan plan_reduction(const Shape& in, const Axes& axes) {
  ReductionPlan plan;
  const std::size_t rank = in.rank();
  std::vector<bool> reduced(rank, !axes.has_value());
  if (axes) {
    for (std::size_t ax : *axes) {
      if (ax >= rank) {
        throw ShapeError("reduction axis " + std::to_string(ax) + " invalid for " + in.str());
      }
      if (reduced[ax]) throw ShapeError("reduction axis listed twice");
      reduced[ax] = true;
    }
  }
  std::vector<std::size_t> kept;
  for (std::size_t ax = 0; ax < rank; ++ax) {
    if (reduced[ax]) {
      plan.count *= in[ax];
    } else {
      kept.push_back(in[ax]);
    }
  }
  plan.out_shape = Shape(kept);

  plan.slot.resize(in.numel());
  std::vector<std::size_t> idx(rank, 0);
  for (std::size_t flat = 0; flat < plan.slot.size(); ++flat) {
    std::size_t o = 0;
    for (std::size_t ax = 0; ax < rank; ++ax) {
      if (!reduced[ax]) o = o * in[ax] + idx[ax];
    }
    plan.slot[flat] = o;
    for (std::size_t ax = rank; ax-- > 0;) {
      if (++idx[ax] < in[ax]) break;
      idx[ax] = 0;
    }
  }
  return plan;
}

Var reduce(const Var& a, const Axes& axes, bool average, const char* op) {
  if (!axes) {
    const double total = pairwise_sum(a.value().data());
    const double n = static_cast<double>(a.value().numel());
    const double factor = average ? 1.0 / n : 1.0;
    return make_result(Tensor::scalar(total * factor), op, {a}, [factor](Node& node) {
      Node* p = grad_target(node, 0);
      if (!p) return;
      const double g0 = node.grad[0] * factor;
      for (double& g : p->grad_buffer().data()) g += g0;
    });
  }
  auto plan = std::make_shared<ReductionPlan>(plan_reduction(a.shape(), axes));
  Tensor out(plan->out_shape);
  auto src = a.value().data();
  auto dst = out.data();
  for (std::size_t i = 0; i < src.size(); ++i) dst[plan->slot[i]] += src[i];
  const double factor = average ? 1.0 / static_cast<double>(plan->count) : 1.0;
  if (average) {
    for (double& v : dst) v *= factor;
  }
  return make_result(std::move(out), op, {a}, [plan, factor](Node& node) {
    Node* p = grad_target(node, 0);
    if (!p) return;
    auto g = p->grad_buffer().data();
    auto up = node.grad.data();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += up[plan->slot[i]] * factor;
  });
}

}  // namespace

Var sum(const Var& a, const Axes& axes) { return reduce(a, axes, false, "sum"); }

Var mean(const Var& a, const Axes& axes) { return reduce(a, axes, true, "mean"); }

// ---- convolution -----------------------------------------------------------

namespace {

struct ConvGeometry {
  std::size_t batch, cin, h, w, cout, k, pad, stride, oh, ow;
};

ConvGeometry conv_geometry(const Shape& in, const Shape& ker, const Shape& bias, std::size_t pad,
                           std::size_t stride) {
  require_rank4(in, "conv2d input");
  require_rank4(ker, "conv2d kernel");
  if (bias.rank() != 1 || bias[0] != ker[0]) {
    throw ShapeError("conv2d: bias " + bias.str() + " does not match kernel " + ker.str());
  }
  if (ker[1] != in[1]) {
    throw ShapeError("conv2d: kernel " + ker.str() + " expects " + std::to_string(ker[1]) +
                     " input channels, input is " + in.str());
  }
  if (ker[2] != ker[3] || ker[2] % 2 == 0) {
    throw ShapeError("conv2d: kernel must be square with odd extent, got " + ker.str());
  }
  if (stride == 0) throw InvalidArgument("conv2d: stride must be at least 1");
  ConvGeometry g{in[0], in[1], in[2], in[3], ker[0], ker[2], pad, stride, 0, 0};
  const std::size_t ph = g.h + 2 * pad, pw = g.w + 2 * pad;
  if (ph < g.k || pw < g.k || (ph - g.k) % stride != 0 || (pw - g.k) % stride != 0) {
    throw ShapeError("conv2d: output extent is not a whole number for input " + in.str() +
                     ", kernel " + ker.str() + ", padding " + std::to_string(pad) + ", stride " +
                     std::to_string(stride));
  }
  g.oh = (ph - g.k) / stride + 1;
  g.ow = (pw - g.k) / stride + 1;
  return g;
}

// C[M,N] += A[M,K] * B[K,N], all row-major. Each C element is accumulated
// by one thread over k in increasing order, so results do not depend on the
// thread count.
// Four doubles; aligned(8) permits unaligned loads through a cast pointer.
typedef double v4d __attribute__((vector_size(32), aligned(8)));

void gemm_acc(std::size_t M, std::size_t N, std::size_t K, const double* A, const double* B,
              double* C) {
  constexpr std::size_t MR = 4, NR = 8;
  const long row_blocks = static_cast<long>((M + MR - 1) / MR);
#pragma omp parallel for schedule(static)
  for (long rb = 0; rb < row_blocks; ++rb) {
    const std::size_t i0 = static_cast<std::size_t>(rb) * MR;
    const std::size_t mr = std::min(MR, M - i0);
    std::size_t j0 = 0;
    if (mr == MR) {
      const double* a0 = A + i0 * K;
      const double* a1 = a0 + K;
      const double* a2 = a1 + K;
      const double* a3 = a2 + K;
      for (; j0 + NR <= N; j0 += NR) {
        v4d c00{}, c01{}, c10{}, c11{}, c20{}, c21{}, c30{}, c31{};
        for (std::size_t k = 0; k < K; ++k) {
          const double* b = B + k * N + j0;
          const v4d b0 = *reinterpret_cast<const v4d*>(b);
          const v4d b1 = *reinterpret_cast<const v4d*>(b + 4);
          c00 += a0[k] * b0;
          c01 += a0[k] * b1;
          c10 += a1[k] * b0;
          c11 += a1[k] * b1;
          c20 += a2[k] * b0;
          c21 += a2[k] * b1;
          c30 += a3[k] * b0;
          c31 += a3[k] * b1;
        }
        const v4d* acc[MR][2] = {{&c00, &c01}, {&c10, &c11}, {&c20, &c21}, {&c30, &c31}};
        for (std::size_t r = 0; r < MR; ++r) {
          double* crow = C + (i0 + r) * N + j0;
          for (std::size_t c = 0; c < 4; ++c) {
            crow[c] += (*acc[r][0])[c];
            crow[c + 4] += (*acc[r][1])[c];
          }
        }
      }
    }
    // Edges: same k order, one element at a time.
    for (std::size_t r = 0; r < mr; ++r) {
      const double* arow = A + (i0 + r) * K;
      double* crow = C + (i0 + r) * N;
      for (std::size_t j = (r < mr && mr == MR) ? j0 : 0; j < N; ++j) {
        double acc = 0.0;
        for (std::size_t k = 0; k < K; ++k) acc += arow[k] * B[k * N + j];
        crow[j] += acc;
      }
    }
  }
}

// Row-major transpose of an [R,C] matrix.
std::vector<double> transpose(const double* src, std::size_t rows, std::size_t cols) {
  std::vector<double> out(rows * cols);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) out[c * rows + r] = src[r * cols + c];
  }
  return out;
}

// col[(ci*k + ky)*k + kx][y*ow + x] = src[ci][y*stride + ky - pad][x*stride + kx - pad],
// zero outside the image.
void im2col(const ConvGeometry& g, const double* src, double* col) {
  const std::size_t P = g.oh * g.ow;
  for (std::size_t ci = 0; ci < g.cin; ++ci) {
    const double* plane = src + ci * g.h * g.w;
    for (std::size_t ky = 0; ky < g.k; ++ky) {
      for (std::size_t kx = 0; kx < g.k; ++kx) {
        double* dst = col + ((ci * g.k + ky) * g.k + kx) * P;
        for (std::size_t y = 0; y < g.oh; ++y) {
          const long iy = static_cast<long>(y * g.stride + ky) - static_cast<long>(g.pad);
          double* drow = dst + y * g.ow;
          if (iy < 0 || iy >= static_cast<long>(g.h)) {
            std::fill(drow, drow + g.ow, 0.0);
            continue;
          }
          const double* srow = plane + static_cast<std::size_t>(iy) * g.w;
          for (std::size_t x = 0; x < g.ow; ++x) {
            const long ix = static_cast<long>(x * g.stride + kx) - static_cast<long>(g.pad);
            drow[x] = (ix < 0 || ix >= static_cast<long>(g.w)) ? 0.0 : srow[ix];
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatters col back into dst (accumulating).
void col2im_add(const ConvGeometry& g, const double* col, double* dst) {
  const std::size_t P = g.oh * g.ow;
  for (std::size_t ci = 0; ci < g.cin; ++ci) {
    double* plane = dst + ci * g.h * g.w;
    for (std::size_t ky = 0; ky < g.k; ++ky) {
      for (std::size_t kx = 0; kx < g.k; ++kx) {
        const double* src = col + ((ci * g.k + ky) * g.k + kx) * P;
        for (std::size_t y = 0; y < g.oh; ++y) {
          const long iy = static_cast<long>(y * g.stride + ky) - static_cast<long>(g.pad);
          if (iy < 0 || iy >= static_cast<long>(g.h)) continue;
          double* drow = plane + static_cast<std::size_t>(iy) * g.w;
          const double* srow = src + y * g.ow;
          for (std::size_t x = 0; x < g.ow; ++x) {
            const long ix = static_cast<long>(x * g.stride + kx) - static_cast<long>(g.pad);
            if (ix >= 0 && ix < static_cast<long>(g.w)) drow[ix] += srow[x];
          }
        }
      }
    }
  }
}

}  // namespace

Var conv2d(const Var& input, const Var& kernel, const Var& bias, std::size_t padding,
           std::size_t stride) {
  const ConvGeometry g =
      conv_geometry(input.shape(), kernel.shape(), bias.shape(), padding, stride);
  const std::size_t K = g.cin * g.k * g.k, P = g.oh * g.ow;
  Tensor out(Shape{g.batch, g.cout, g.oh, g.ow});
  const double* in = input.value().data().data();
  const double* w = kernel.value().data().data();
  const double* bv = bias.value().data().data();
  double* o = out.data().data();
  std::vector<double> col(K * P);
  for (std::size_t b = 0; b < g.batch; ++b) {
    im2col(g, in + b * g.cin * g.h * g.w, col.data());
    double* ob = o + b * g.cout * P;
    for (std::size_t co = 0; co < g.cout; ++co) std::fill(ob + co * P, ob + (co + 1) * P, bv[co]);
    gemm_acc(g.cout, P, K, w, col.data(), ob);
  }

  return make_result(std::move(out), "conv2d", {input, kernel, bias}, [g, K, P](Node& n) {
    const double* in = input_value(n, 0).data().data();
    const double* w = input_value(n, 1).data().data();
    const double* go = n.grad.data().data();
    Node* gin = grad_target(n, 0);
    Node* gker = grad_target(n, 1);

    if (gin || gker) {
      std::vector<double> col(K * P);
      // dW += gout_b [Cout,P] * col_b^T [P,K], batch items in order.
      std::vector<double> wt = gin ? transpose(w, g.cout, K) : std::vector<double>{};
      double* gi = gin ? gin->grad_buffer().data().data() : nullptr;
      double* gw = gker ? gker->grad_buffer().data().data() : nullptr;
      for (std::size_t b = 0; b < g.batch; ++b) {
        const double* gob = go + b * g.cout * P;
        if (gker) {
          im2col(g, in + b * g.cin * g.h * g.w, col.data());
          const std::vector<double> colt = transpose(col.data(), K, P);
          gemm_acc(g.cout, K, P, gob, colt.data(), gw);
        }
        if (gin) {
          std::fill(col.begin(), col.end(), 0.0);
          gemm_acc(K, P, g.cout, wt.data(), gob, col.data());
          col2im_add(g, col.data(), gi + b * g.cin * g.h * g.w);
        }
      }
    }

    if (Node* p = grad_target(n, 2)) {
      double* gb = p->grad_buffer().data().data();
      for (std::size_t co = 0; co < g.cout; ++co) {
        double acc = 0.0;
        for (std::size_t b = 0; b < g.batch; ++b) {
          const double* gplane = go + (b * g.cout + co) * P;
          for (std::size_t i = 0; i < P; ++i) acc += gplane[i];
        }
        gb[co] += acc;
      }
    }
  });
}

// ---- crop / pooling --------------------------------------------------------

Var crop(const Var& input, std::size_t y0, std::size_t x0, std::size_t h, std::size_t w) {
  const Shape& s = input.shape();
  require_rank4(s, "crop");
  if (h == 0 || w == 0 || y0 + h > s[2] || x0 + w > s[3]) {
    throw ShapeError("crop window out of range for " + s.str());
  }
  const std::size_t planes = s[0] * s[1];
  Tensor out(Shape{s[0], s[1], h, w});
  const double* src = input.value().data().data();
  double* dst = out.data().data();
  for (std::size_t p = 0; p < planes; ++p) {
    for (std::size_t y = 0; y < h; ++y) {
      const double* row = src + (p * s[2] + y0 + y) * s[3] + x0;
      std::copy(row, row + w, dst + (p * h + y) * w);
    }
  }
  return make_result(std::move(out), "crop", {input}, [s, y0, x0, h, w, planes](Node& n) {
    Node* p = grad_target(n, 0);
    if (!p) return;
    double* g = p->grad_buffer().data().data();
    const double* up = n.grad.data().data();
    for (std::size_t pl = 0; pl < planes; ++pl) {
      for (std::size_t y = 0; y < h; ++y) {
        double* row = g + (pl * s[2] + y0 + y) * s[3] + x0;
        const double* urow = up + (pl * h + y) * w;
        for (std::size_t x = 0; x < w; ++x) row[x] += urow[x];
      }
    }
  });
}

namespace {

Shape pooled_shape(const Shape& s, const char* what) {
  require_rank4(s, what);
  if (s[2] % 2 != 0 || s[3] % 2 != 0) {
    throw ShapeError(std::string(what) + ": spatial extents must be even, got " + s.str());
  }
  return Shape{s[0], s[1], s[2] / 2, s[3] / 2};
}

}  // namespace

Var avg_pool2x2(const Var& input) {
  const Shape s = input.shape();
  Tensor out(pooled_shape(s, "avg_pool2x2"));
  const std::size_t planes = s[0] * s[1], oh = s[2] / 2, ow = s[3] / 2;
  const double* src = input.value().data().data();
  double* dst = out.data().data();
  for (std::size_t p = 0; p < planes; ++p) {
    for (std::size_t y = 0; y < oh; ++y) {
      const double* r0 = src + (p * s[2] + 2 * y) * s[3];
      const double* r1 = r0 + s[3];
      for (std::size_t x = 0; x < ow; ++x) {
        dst[(p * oh + y) * ow + x] = 0.25 * (r0[2 * x] + r0[2 * x + 1] + r1[2 * x] + r1[2 * x + 1]);
      }
    }
  }
  return make_result(std::move(out), "avg_pool2x2", {input}, [s, planes, oh, ow](Node& n) {
    Node* p = grad_target(n, 0);
    if (!p) return;
    double* g = p->grad_buffer().data().data();
    const double* up = n.grad.data().data();
    for (std::size_t pl = 0; pl < planes; ++pl) {
      for (std::size_t y = 0; y < oh; ++y) {
        double* r0 = g + (pl * s[2] + 2 * y) * s[3];
        double* r1 = r0 + s[3];
        for (std::size_t x = 0; x < ow; ++x) {
          const double v = 0.25 * up[(pl * oh + y) * ow + x];
          r0[2 * x] += v;
          r0[2 * x + 1] += v;
          r1[2 * x] += v;
          r1[2 * x + 1] += v;
        }
      }
    }
  });
}

Var max_pool2x2(const Var& input) {
  const Shape s = input.shape();
  Tensor out(pooled_shape(s, "max_pool2x2"));
  const std::size_t planes = s[0] * s[1], oh = s[2] / 2, ow = s[3] / 2;
  auto argmax = std::make_shared<std::vector<std::size_t>>(out.numel());
  const double* src = input.value().data().data();
  double* dst = out.data().data();
  for (std::size_t p = 0; p < planes; ++p) {
    for (std::size_t y = 0; y < oh; ++y) {
      for (std::size_t x = 0; x < ow; ++x) {
        const std::size_t base = (p * s[2] + 2 * y) * s[3] + 2 * x;
        const std::size_t cand[4] = {base, base + 1, base + s[3], base + s[3] + 1};
        std::size_t best = cand[0];
        for (std::size_t c : cand) {
          if (src[c] > src[best]) best = c;
        }
        const std::size_t o = (p * oh + y) * ow + x;
        dst[o] = src[best];
        (*argmax)[o] = best;
      }
    }
  }
  return make_result(std::move(out), "max_pool2x2", {input}, [argmax](Node& n) {
    Node* p = grad_target(n, 0);
    if (!p) return;
    double* g = p->grad_buffer().data().data();
    const double* up = n.grad.data().data();
    for (std::size_t o = 0; o < argmax->size(); ++o) g[(*argmax)[o]] += up[o];
  });
}

// ---- batch normalization ---------------------------------------------------

Var batch_norm(const Var& input, const Var& gamma, const Var& beta, Tensor& running_mean,
               Tensor& running_var, Mode mode, const BatchNormOptions& options) {
  const Shape& s = input.shape();
  require_rank4(s, "batch_norm");
  const std::size_t channels = s[1];
  const Shape cshape{channels};
  require_same_shape(gamma.shape(), cshape, "batch_norm gamma");
  require_same_shape(beta.shape(), cshape, "batch_norm beta");
  require_same_shape(running_mean.shape(), cshape, "batch_norm running mean");
  require_same_shape(running_var.shape(), cshape, "batch_norm running variance");
  if (!(options.epsilon > 0.0)) throw InvalidArgument("batch_norm: epsilon must be positive");

  const std::size_t batch = s[0], plane = s[2] * s[3];
  const std::size_t count = batch * plane;
  if (mode == Mode::train && count < 2) {
    throw InvalidArgument("batch_norm: train mode needs at least 2 values per channel");
  }

  const double* x = input.value().data().data();
  const double* gm = gamma.value().data().data();
  const double* bt = beta.value().data().data();

  Tensor out(s);
  double* y = out.data().data();
  auto xhat = std::make_shared<Tensor>(s);
  auto inv_std = std::make_shared<std::vector<double>>(channels);

  std::vector<double> buffer;
  for (std::size_t c = 0; c < channels; ++c) {
    double mu, var;
    if (mode == Mode::train) {
      buffer.resize(count);
      for (std::size_t b = 0; b < batch; ++b) {
        const double* src = x + (b * channels + c) * plane;
        std::copy(src, src + plane, buffer.begin() + static_cast<std::ptrdiff_t>(b * plane));
      }
      mu = pairwise_sum(buffer) / static_cast<double>(count);
      for (double& v : buffer) v = (v - mu) * (v - mu);
      var = pairwise_sum(buffer) / static_cast<double>(count);
      const double m = options.momentum;
      running_mean[c] = (1.0 - m) * running_mean[c] + m * mu;
      running_var[c] = (1.0 - m) * running_var[c] +
                       m * var * static_cast<double>(count) / static_cast<double>(count - 1);
    } else {
      mu = running_mean[c];
      var = running_var[c];
    }
    const double is = 1.0 / std::sqrt(var + options.epsilon);
    (*inv_std)[c] = is;
    for (std::size_t b = 0; b < batch; ++b) {
      const std::size_t base = (b * channels + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        const double h = (x[base + i] - mu) * is;
        (*xhat)[base + i] = h;
        y[base + i] = gm[c] * h + bt[c];
      }
    }
  }

  return make_result(
      std::move(out), "batch_norm", {input, gamma, beta},
      [xhat, inv_std, mode, batch, channels, plane, count](Node& n) {
        const double* up = n.grad.data().data();
        const double* gm = input_value(n, 1).data().data();
        const double* h = xhat->data().data();
        Node* gx = grad_target(n, 0);
        Node* gg = grad_target(n, 1);
        Node* gb = grad_target(n, 2);
        for (std::size_t c = 0; c < channels; ++c) {
          double sum_g = 0.0, sum_gh = 0.0;
          for (std::size_t b = 0; b < batch; ++b) {
            const std::size_t base = (b * channels + c) * plane;
            for (std::size_t i = 0; i < plane; ++i) {
              sum_g += up[base + i];
              sum_gh += up[base + i] * h[base + i];
            }
          }
          if (gg) gg->grad_buffer()[c] += sum_gh;
          if (gb) gb->grad_buffer()[c] += sum_g;
          if (!gx) continue;
          double* dx = gx->grad_buffer().data().data();
          const double k = gm[c] * (*inv_std)[c];
          if (mode == Mode::train) {
            const double mg = sum_g / static_cast<double>(count);
            const double mgh = sum_gh / static_cast<double>(count);
            for (std::size_t b = 0; b < batch; ++b) {
              const std::size_t base = (b * channels + c) * plane;
              for (std::size_t i = 0; i < plane; ++i) {
                dx[base + i] += k * (up[base + i] - mg - h[base + i] * mgh);
              }
            }
          } else {
            for (std::size_t b = 0; b < batch; ++b) {
              const std::size_t base = (b * channels + c) * plane;
              for (std::size_t i = 0; i < plane; ++i) dx[base + i] += k * up[base + i];
            }
          }
        }
      });
}

}  // namespace neighcnn
