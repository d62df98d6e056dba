#include "mcdrop/ops.hpp"

#include <algorithm>
#include <cmath>

namespace mcdrop {
namespace {

Graph& graph_of(Var a) {
  if (a.graph == nullptr) throw GraphError("unbound Var");
  return *a.graph;
}

const Tensor* value_ptr(Var a) { return &a.graph->node(a.id).value; }

bool is_scalar(const Tensor& t) { return t.rank() == 0; }

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  }
}

Index last_extent(const Tensor& t) { return t.rank() == 0 ? 1 : t.shape().back(); }

Eigen::Map<const RowMatrixXd> rows_view(const Eigen::VectorXd& v, Index cols) {
  return {v.data(), cols == 0 ? 0 : v.size() / cols, cols};
}

Eigen::Map<RowMatrixXd> rows_view(Eigen::VectorXd& v, Index cols) {
  return {v.data(), cols == 0 ? 0 : v.size() / cols, cols};
}

RowMatrixXd softmax_rows(const Eigen::Map<const RowMatrixXd>& x) {
  RowMatrixXd s = x.colwise() - x.rowwise().maxCoeff();
  s = s.array().exp();
  s.array().colwise() /= s.rowwise().sum().array();
  return s;
}

RowMatrixXd log_softmax_rows(const Eigen::Map<const RowMatrixXd>& x) {
  RowMatrixXd shifted = x.colwise() - x.rowwise().maxCoeff();
  const Eigen::VectorXd lse = shifted.array().exp().rowwise().sum().log();
  return shifted.colwise() - lse;
}

enum class Binary { add, sub, mul };

Var binary(Binary kind, Var a, Var b) {
  Graph& g = graph_of(a);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const char* name = kind == Binary::add ? "add" : kind == Binary::sub ? "sub" : "mul";
  const bool broadcast = is_scalar(bv) && !is_scalar(av);
  if (!broadcast) require_same_shape(name, av, bv);

  Tensor out(av.shape());
  const Eigen::ArrayXd rhs = broadcast ? Eigen::ArrayXd(Eigen::ArrayXd::Constant(av.size(), bv[0])) : Eigen::ArrayXd(bv.data().array());
  switch (kind) {
    case Binary::add: out.data() = av.data().array() + rhs; break;
    case Binary::sub: out.data() = av.data().array() - rhs; break;
    case Binary::mul: out.data() = av.data().array() * rhs; break;
  }
  const Tensor* pa = value_ptr(a);
  const Tensor* pb = value_ptr(b);
  return g.record(name, std::move(out), {a, b},
                  [kind, broadcast, pa, pb](const Eigen::VectorXd& up, std::span<Eigen::VectorXd* const> in) {
                    Eigen::ArrayXd ga = up.array();
                    Eigen::ArrayXd gb = up.array();
                    if (kind == Binary::sub) gb = -gb;
                    if (kind == Binary::mul) {
                      if (broadcast) {
                        ga *= (*pb)[0];
                      } else {
                        ga *= pb->data().array();
                      }
                      gb *= pa->data().array();
                    }
                    if (in[0]) *in[0] += ga.matrix();
                    if (in[1]) {
                      if (broadcast) {
                        (*in[1])[0] += gb.sum();
                      } else {
                        *in[1] += gb.matrix();
                      }
                    }
                  });
}

template <typename Fwd, typename Deriv>
Var unary(const char* name, Var a, Fwd fwd, Deriv deriv) {
  Graph& g = graph_of(a);
  Tensor out(a.shape());
  out.data() = a.value().data().unaryExpr(fwd);
  const Tensor* pa = value_ptr(a);
  return g.record(name, std::move(out), {a}, [pa, deriv](const Eigen::VectorXd& up, std::span<Eigen::VectorXd* const> in) {
    if (in[0]) *in[0] += up.binaryExpr(pa->data(), deriv);
  });
}

void im2col(const double* image, Index channels, Index height, Index width, Index k, RowMatrixXd& cols) {
  const Index pad = k / 2;
  cols.resize(channels * k * k, height * width);
  for (Index c = 0; c < channels; ++c) {
    for (Index ky = 0; ky < k; ++ky) {
      for (Index kx = 0; kx < k; ++kx) {
        const Index row = (c * k + ky) * k + kx;
        double* dst = cols.row(row).data();
        for (Index y = 0; y < height; ++y) {
          const Index sy = y + ky - pad;
          for (Index x = 0; x < width; ++x) {
            const Index sx = x + kx - pad;
            dst[y * width + x] = (sy >= 0 && sy < height && sx >= 0 && sx < width)
                                     ? image[(c * height + sy) * width + sx]
                                     : 0.0;
          }
        }
      }
    }
  }
}

void col2im_add(const RowMatrixXd& cols, Index channels, Index height, Index width, Index k, double* image) {
  const Index pad = k / 2;
  for (Index c = 0; c < channels; ++c) {
    for (Index ky = 0; ky < k; ++ky) {
      for (Index kx = 0; kx < k; ++kx) {
        const double* src = cols.row((c * k + ky) * k + kx).data();
        for (Index y = 0; y < height; ++y) {
          const Index sy = y + ky - pad;
          if (sy < 0 || sy >= height) continue;
          for (Index x = 0; x < width; ++x) {
            const Index sx = x + kx - pad;
            if (sx >= 0 && sx < width) image[(c * height + sy) * width + sx] += src[y * width + x];
          }
        }
      }
    }
  }
}

}  // namespace

Var add(Var a, Var b) { return binary(Binary::add, a, b); }
Var sub(Var a, Var b) { return binary(Binary::sub, a, b); }
Var mul(Var a, Var b) { return binary(Binary::mul, a, b); }
Var operator+(Var a, Var b) { return add(a, b); }
Var operator-(Var a, Var b) { return sub(a, b); }
Var operator*(Var a, Var b) { return mul(a, b); }
Var operator*(double c, Var a) { return scale(a, c); }

Var add(Var a, double c) {
  Graph& g = graph_of(a);
  Tensor out(a.shape(), (a.value().data().array() + c).matrix());
  return g.record("add_scalar", std::move(out), {a}, [](const Eigen::VectorXd& up, std::span<Eigen::VectorXd* const> in) {
    if (in[0]) *in[0] += up;
  });
}

Var scale(Var a, double c) {
  Graph& g = graph_of(a);
  Tensor out(a.shape(), a.value().data() * c);
  return g.record("scale", std::move(out), {a}, [c](const Eigen::VectorXd& up, std::span<Eigen::VectorXd* const> in) {
    if (in[0]) *in[0] += c * up;
  });
}

Var matmul(Var a, Var b) {
  Graph& g = graph_of(a);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.rank() != 2 || bv.rank() != 2 || av.dim(1) != bv.dim(0)) {
    throw ShapeError("matmul: incompatible shapes " + to_string(av.shape()) + " x " + to_string(bv.shape()));
  }
  const Index n = av.dim(0), k = av.dim(1), m = bv.dim(1);
  Tensor out({n, m});
  out.matrix().noalias() = av.matrix() * bv.matrix();
  const Tensor* pa = value_ptr(a);
  const Tensor* pb = value_ptr(b);
  return g.record("matmul", std::move(out), {a, b},
                  [pa, pb, n, k, m](const Eigen::VectorXd& up, std::span<Eigen::VectorXd* const> in) {
                    Eigen::Map<const RowMatrixXd> gout(up.data(), n, m);
                    if (in[0]) Eigen::Map<RowMatrixXd>(in[0]->data(), n, k).noalias() += gout * pb->matrix().transpose();
                    if (in[1]) Eigen::Map<RowMatrixXd>(in[1]->data(), k, m).noalias() += pa->matrix().transpose() * gout;
                  });
}

Var bias_add(Var a, Var b) {
  Graph& g = graph_of(a);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const Index m = last_extent(av);
  if (bv.rank() != 1 || bv.dim(0) != m || av.rank() == 0) {
    throw ShapeError("bias_add: bias " + to_string(bv.shape()) + " does not match last axis of " + to_string(av.shape()));
  }
  Tensor out(av.shape());
  rows_view(out.data(), m) = rows_view(av.data(), m).rowwise() + bv.data().transpose();
  return g.record("bias_add", std::move(out), {a, b}, [m](const Eigen::VectorXd& up, std::span<Eigen::VectorXd* const> in) {
    if (in[0]) *in[0] += up;
    if (in[1]) *in[1] += rows_view(up, m).colwise().sum().transpose();
  });
}

Var relu(Var a) {
  return unary(
      "relu", a, [](double x) { return x > 0.0 ? x : 0.0; }, [](double g, double x) { return x > 0.0 ? g : 0.0; });
}

Var exp(Var a) {
  return unary(
      "exp", a, [](double x) { return std::exp(x); }, [](double g, double x) { return g * std::exp(x); });
}

Var log(Var a) {
  return unary(
      "log", a, [](double x) { return std::log(x); }, [](double g, double x) { return g / x; });
}

Var square(Var a) {
  return unary(
      "square", a, [](double x) { return x * x; }, [](double g, double x) { return 2.0 * x * g; });
}

Var clamp(Var a, double lo, double hi) {
  return unary(
      "clamp", a, [lo, hi](double x) { return std::clamp(x, lo, hi); },
      [lo, hi](double g, double x) { return (x > lo && x < hi) ? g : 0.0; });
}

Var sum(Var a) {
  Graph& g = graph_of(a);
  return g.record("sum", Tensor::scalar(a.value().data().sum()), {a},
                  [](const Eigen::VectorXd& up, std::span<Eigen::VectorXd* const> in) {
                    if (in[0]) in[0]->array() += up[0];
                  });
}

Var mean(Var a) {
  Graph& g = graph_of(a);
  const Index n = a.value().size();
  if (n == 0) throw ShapeError("mean of empty tensor");
  return g.record("mean", Tensor::scalar(a.value().data().mean()), {a},
                  [n](const Eigen::VectorXd& up, std::span<Eigen::VectorXd* const> in) {
                    if (in[0]) in[0]->array() += up[0] / static_cast<double>(n);
                  });
}

Var sum_last(Var a) {
  Graph& g = graph_of(a);
  const Tensor& av = a.value();
  if (av.rank() == 0) throw ShapeError("sum_last on a scalar");
  const Index m = av.shape().back();
  Shape shape(av.shape().begin(), av.shape().end() - 1);
  Tensor out(shape, rows_view(av.data(), m).rowwise().sum());
  return g.record("sum_last", std::move(out), {a}, [m](const Eigen::VectorXd& up, std::span<Eigen::VectorXd* const> in) {
    if (in[0]) rows_view(*in[0], m).colwise() += up;
  });
}

Var softmax(Var a) {
  Graph& g = graph_of(a);
  const Index m = last_extent(a.value());
  Tensor out(a.shape());
  rows_view(out.data(), m) = softmax_rows(rows_view(a.value().data(), m));
  const NodeId self = g.size();
  Graph* gp = &g;
  return g.record("softmax", std::move(out), {a}, [gp, self, m](const Eigen::VectorXd& up, std::span<Eigen::VectorXd* const> in) {
    if (!in[0]) return;
    const auto s = rows_view(gp->node(self).value.data(), m);
    const auto gu = rows_view(up, m);
    const Eigen::VectorXd dot = (gu.array() * s.array()).rowwise().sum();
    rows_view(*in[0], m).array() += s.array() * (gu.colwise() - dot).array();
  });
}

Var log_softmax(Var a) {
  Graph& g = graph_of(a);
  const Index m = last_extent(a.value());
  Tensor out(a.shape());
  rows_view(out.data(), m) = log_softmax_rows(rows_view(a.value().data(), m));
  const NodeId self = g.size();
  Graph* gp = &g;
  return g.record("log_softmax", std::move(out), {a},
                  [gp, self, m](const Eigen::VectorXd& up, std::span<Eigen::VectorXd* const> in) {
                    if (!in[0]) return;
                    const auto ls = rows_view(gp->node(self).value.data(), m);
                    const auto gu = rows_view(up, m);
                    const Eigen::VectorXd total = gu.rowwise().sum();
                    rows_view(*in[0], m) += gu - (ls.array().exp().colwise() * total.array()).matrix();
                  });
}

Var cross_entropy(Var logits, std::span<const int> targets) {
  Graph& g = graph_of(logits);
  const Tensor& lv = logits.value();
  if (lv.rank() != 2) throw ShapeError("cross_entropy expects [batch, classes] logits, got " + to_string(lv.shape()));
  const Index n = lv.dim(0), c = lv.dim(1);
  if (static_cast<Index>(targets.size()) != n) throw ShapeError("cross_entropy: target count does not match batch");
  if (n == 0) throw ShapeError("cross_entropy on an empty batch");
  for (int t : targets) {
    if (t < 0 || t >= c) throw std::out_of_range("cross_entropy: target " + std::to_string(t) + " outside [0, " + std::to_string(c) + ")");
  }
  const RowMatrixXd ls = log_softmax_rows(lv.matrix());
  double total = 0.0;
  for (Index i = 0; i < n; ++i) total -= ls(i, targets[static_cast<std::size_t>(i)]);
  std::vector<int> labels(targets.begin(), targets.end());
  return g.record("cross_entropy", Tensor::scalar(total / static_cast<double>(n)), {logits},
                  [ls, labels = std::move(labels), n, c](const Eigen::VectorXd& up, std::span<Eigen::VectorXd* const> in) {
                    if (!in[0]) return;
                    RowMatrixXd grad = ls.array().exp();
                    for (Index i = 0; i < n; ++i) grad(i, labels[static_cast<std::size_t>(i)]) -= 1.0;
                    Eigen::Map<RowMatrixXd>(in[0]->data(), n, c) += (up[0] / static_cast<double>(n)) * grad;
                  });
}

Var reshape(Var a, Shape shape) {
  Graph& g = graph_of(a);
  if (element_count(shape) != a.value().size()) {
    throw ShapeError("reshape: cannot view " + to_string(a.shape()) + " as " + to_string(shape));
  }
  return g.record("reshape", a.value().reshaped(std::move(shape)), {a},
                  [](const Eigen::VectorXd& up, std::span<Eigen::VectorXd* const> in) {
                    if (in[0]) *in[0] += up;
                  });
}

Var conv2d(Var x, Var weight, Var bias) {
  Graph& g = graph_of(x);
  const Tensor& xv = x.value();
  const Tensor& wv = weight.value();
  if (xv.rank() != 4 || wv.rank() != 4 || wv.dim(1) != xv.dim(1) || wv.dim(2) != wv.dim(3) || wv.dim(2) % 2 == 0) {
    throw ShapeError("conv2d: incompatible input " + to_string(xv.shape()) + " and weight " + to_string(wv.shape()));
  }
  const Index batch = xv.dim(0), cin = xv.dim(1), h = xv.dim(2), w = xv.dim(3);
  const Index cout = wv.dim(0), k = wv.dim(2);
  if (bias.value().shape() != Shape{cout}) throw ShapeError("conv2d: bias must have shape [" + std::to_string(cout) + "]");

  Tensor out({batch, cout, h, w});
  const Eigen::Map<const RowMatrixXd> wm(wv.data().data(), cout, cin * k * k);
  RowMatrixXd cols;
  for (Index b = 0; b < batch; ++b) {
    im2col(xv.data().data() + b * cin * h * w, cin, h, w, k, cols);
    Eigen::Map<RowMatrixXd> ob(out.data().data() + b * cout * h * w, cout, h * w);
    ob.noalias() = wm * cols;
    ob.colwise() += bias.value().data();
  }
  const Tensor* px = value_ptr(x);
  const Tensor* pw = value_ptr(weight);
  return g.record("conv2d", std::move(out), {x, weight, bias},
                  [px, pw, batch, cin, h, w, cout, k](const Eigen::VectorXd& up, std::span<Eigen::VectorXd* const> in) {
                    const Eigen::Map<const RowMatrixXd> wm(pw->data().data(), cout, cin * k * k);
                    RowMatrixXd cols;
                    RowMatrixXd dcols;
                    for (Index b = 0; b < batch; ++b) {
                      const Eigen::Map<const RowMatrixXd> gb(up.data() + b * cout * h * w, cout, h * w);
                      if (in[1]) {
                        im2col(px->data().data() + b * cin * h * w, cin, h, w, k, cols);
                        Eigen::Map<RowMatrixXd>(in[1]->data(), cout, cin * k * k).noalias() += gb * cols.transpose();
                      }
                      if (in[2]) *in[2] += gb.rowwise().sum();
                      if (in[0]) {
                        dcols.noalias() = wm.transpose() * gb;
                        col2im_add(dcols, cin, h, w, k, in[0]->data() + b * cin * h * w);
                      }
                    }
                  });
}

Var global_avg_pool(Var x) {
  Graph& g = graph_of(x);
  const Tensor& xv = x.value();
  if (xv.rank() != 4) throw ShapeError("global_avg_pool expects NCHW input, got " + to_string(xv.shape()));
  const Index batch = xv.dim(0), c = xv.dim(1), hw = xv.dim(2) * xv.dim(3);
  Tensor out({batch, c});
  out.data() = Eigen::Map<const RowMatrixXd>(xv.data().data(), batch * c, hw).rowwise().mean();
  return g.record("global_avg_pool", std::move(out), {x},
                  [batch, c, hw](const Eigen::VectorXd& up, std::span<Eigen::VectorXd* const> in) {
                    if (!in[0]) return;
                    Eigen::Map<RowMatrixXd>(in[0]->data(), batch * c, hw).colwise() += up / static_cast<double>(hw);
                  });
}

}  // namespace mcdrop
