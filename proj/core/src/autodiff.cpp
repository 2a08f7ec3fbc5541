#include "mmrl/autodiff.hpp"

#include <cmath>
#include <limits>
#include <memory>
#include <string>
#include <utility>

#include "mmrl/errors.hpp"

namespace mmrl {

const Tensor& Var::value() const { return tape_->node(id_).value; }
const Tensor& Var::grad() const { return tape_->node(id_).grad; }

Var Tape::leaf(Tensor value, bool requires_grad) {
    Node n;
    n.grad = Tensor::zeros(value.shape());
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    nodes_.push_back(std::move(n));
    return Var(this, nodes_.size() - 1);
}

Var Tape::record(Tensor value, const char* op, std::vector<std::size_t> parents,
                 std::function<void(Tape&, const Node&)> backward_fn) {
    Node n;
    n.grad = Tensor::zeros(value.shape());
    n.value = std::move(value);
    n.requires_grad = any_requires_grad(parents);
    n.op = op;
    n.parents = std::move(parents);
    n.backward_fn = std::move(backward_fn);
    nodes_.push_back(std::move(n));
    return Var(this, nodes_.size() - 1);
}

bool Tape::any_requires_grad(const std::vector<std::size_t>& ids) const {
    for (std::size_t id : ids) {
        if (nodes_[id].requires_grad) return true;
    }
    return false;
}

void Tape::backward(Var loss) {
    if (loss.tape_ != this) throw ValueError("backward: loss Var does not belong to this tape");
    Node& root = nodes_[loss.id_];
    if (root.value.size() != 1) {
        throw ShapeError("backward: loss must be scalar, got " + shape_string(root.value.shape()));
    }
    // Each call computes dLoss/dNode from scratch and then adds it onto the
    // existing grad buffers, so repeated backward calls accumulate.
    std::vector<Tensor> prior(nodes_.size());
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        prior[i] = std::move(nodes_[i].grad);
        nodes_[i].grad = Tensor::zeros(nodes_[i].value.shape());
    }
    root.grad[0] = 1.0;
    // Creation order is topological order, so one reverse sweep visits every
    // node after all of its consumers.
    for (std::size_t i = loss.id_ + 1; i-- > 0;) {
        const Node& n = nodes_[i];
        if (n.backward_fn && n.requires_grad) n.backward_fn(*this, n);
    }
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        Node& n = nodes_[i];
        for (std::size_t k = 0; k < n.grad.size(); ++k) n.grad[k] += prior[i][k];
    }
}

void Tape::zero_grad() {
    for (Node& n : nodes_) n.grad = Tensor::zeros(n.value.shape());
}

namespace {

void require_rank2(const Tensor& t, const char* op) {
    if (t.ndim() != 2) {
        throw ShapeError(std::string(op) + ": expected a matrix, got " + shape_string(t.shape()));
    }
}

void require_rank4(const Tensor& t, const char* op) {
    if (t.ndim() != 4) {
        throw ShapeError(std::string(op) + ": expected an NxCxHxW tensor, got " + shape_string(t.shape()));
    }
}

}  // namespace

Var Tape::add(Var a, Var b) {
    require_same_shape(a.value(), b.value(), "add");
    Tensor out = a.value();
    const Tensor& bv = b.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
    return record(std::move(out), "add", {a.id(), b.id()}, [](Tape& t, const Node& n) {
        for (std::size_t p : n.parents) {
            Node& parent = t.node(p);
            if (!parent.requires_grad) continue;
            for (std::size_t i = 0; i < n.grad.size(); ++i) parent.grad[i] += n.grad[i];
        }
    });
}

Var Tape::sub(Var a, Var b) {
    require_same_shape(a.value(), b.value(), "sub");
    Tensor out = a.value();
    const Tensor& bv = b.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
    return record(std::move(out), "sub", {a.id(), b.id()}, [](Tape& t, const Node& n) {
        Node& pa = t.node(n.parents[0]);
        Node& pb = t.node(n.parents[1]);
        if (pa.requires_grad)
            for (std::size_t i = 0; i < n.grad.size(); ++i) pa.grad[i] += n.grad[i];
        if (pb.requires_grad)
            for (std::size_t i = 0; i < n.grad.size(); ++i) pb.grad[i] -= n.grad[i];
    });
}

Var Tape::mul(Var a, Var b) {
    require_same_shape(a.value(), b.value(), "mul");
    Tensor out = a.value();
    const Tensor& bv = b.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
    return record(std::move(out), "mul", {a.id(), b.id()}, [](Tape& t, const Node& n) {
        Node& pa = t.node(n.parents[0]);
        Node& pb = t.node(n.parents[1]);
        if (pa.requires_grad)
            for (std::size_t i = 0; i < n.grad.size(); ++i) pa.grad[i] += n.grad[i] * pb.value[i];
        if (pb.requires_grad)
            for (std::size_t i = 0; i < n.grad.size(); ++i) pb.grad[i] += n.grad[i] * pa.value[i];
    });
}

Var Tape::scale(Var a, double s) {
    Tensor out = a.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= s;
    return record(std::move(out), "scale", {a.id()}, [s](Tape& t, const Node& n) {
        Node& pa = t.node(n.parents[0]);
        if (!pa.requires_grad) return;
        for (std::size_t i = 0; i < n.grad.size(); ++i) pa.grad[i] += s * n.grad[i];
    });
}

Var Tape::matmul(Var a, Var b) {
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    require_rank2(av, "matmul");
    require_rank2(bv, "matmul");
    if (av.extent(1) != bv.extent(0)) {
        throw ShapeError("matmul: inner extents differ, " + shape_string(av.shape()) + " vs " +
                         shape_string(bv.shape()));
    }
    return record(mmrl::matmul(av, bv), "matmul", {a.id(), b.id()}, [](Tape& t, const Node& n) {
        Node& pa = t.node(n.parents[0]);
        Node& pb = t.node(n.parents[1]);
        const Tensor& A = pa.value;
        const Tensor& B = pb.value;
        const std::size_t p = A.extent(0), q = A.extent(1), r = B.extent(1);
        if (pa.requires_grad) {  // dA = dC . B^T
            for (std::size_t i = 0; i < p; ++i)
                for (std::size_t j = 0; j < r; ++j) {
                    const double g = n.grad(i, j);
                    for (std::size_t k = 0; k < q; ++k) pa.grad(i, k) += g * B(k, j);
                }
        }
        if (pb.requires_grad) {  // dB = A^T . dC
            for (std::size_t i = 0; i < p; ++i)
                for (std::size_t k = 0; k < q; ++k) {
                    const double av_ik = A(i, k);
                    for (std::size_t j = 0; j < r; ++j) pb.grad(k, j) += av_ik * n.grad(i, j);
                }
        }
    });
}

Var Tape::transpose2d(Var a) {
    require_rank2(a.value(), "transpose2d");
    return record(transposed(a.value()), "transpose2d", {a.id()}, [](Tape& t, const Node& n) {
        Node& pa = t.node(n.parents[0]);
        if (!pa.requires_grad) return;
        const std::size_t rows = n.grad.extent(0), cols = n.grad.extent(1);
        for (std::size_t i = 0; i < rows; ++i)
            for (std::size_t j = 0; j < cols; ++j) pa.grad(j, i) += n.grad(i, j);
    });
}

Var Tape::concat(Var a, Var b) {
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    require_rank2(av, "concat");
    require_rank2(bv, "concat");
    if (av.extent(0) != bv.extent(0)) {
        throw ShapeError("concat: row counts differ, " + shape_string(av.shape()) + " vs " +
                         shape_string(bv.shape()));
    }
    const std::size_t ca = av.extent(1);
    return record(concat_cols(av, bv), "concat", {a.id(), b.id()}, [ca](Tape& t, const Node& n) {
        Node& pa = t.node(n.parents[0]);
        Node& pb = t.node(n.parents[1]);
        const std::size_t rows = n.grad.extent(0), cols = n.grad.extent(1);
        for (std::size_t i = 0; i < rows; ++i)
            for (std::size_t j = 0; j < cols; ++j) {
                const double g = n.grad(i, j);
                if (j < ca) {
                    if (pa.requires_grad) pa.grad(i, j) += g;
                } else if (pb.requires_grad) {
                    pb.grad(i, j - ca) += g;
                }
            }
    });
}

Var Tape::reshape(Var a, std::vector<std::size_t> shape) {
    return record(a.value().reshaped(shape), "reshape", {a.id()}, [](Tape& t, const Node& n) {
        Node& pa = t.node(n.parents[0]);
        if (!pa.requires_grad) return;
        for (std::size_t i = 0; i < n.grad.size(); ++i) pa.grad[i] += n.grad[i];
    });
}

Var Tape::add_row_bias(Var x, Var bias) {
    const Tensor& xv = x.value();
    const Tensor& bv = bias.value();
    require_rank2(xv, "add_row_bias");
    if (bv.ndim() != 1 || bv.extent(0) != xv.extent(1)) {
        throw ShapeError("add_row_bias: bias " + shape_string(bv.shape()) + " does not match columns of " +
                         shape_string(xv.shape()));
    }
    const std::size_t rows = xv.extent(0), cols = xv.extent(1);
    Tensor out = xv;
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j) out(i, j) += bv[j];
    return record(std::move(out), "add_row_bias", {x.id(), bias.id()}, [](Tape& t, const Node& n) {
        Node& px = t.node(n.parents[0]);
        Node& pb = t.node(n.parents[1]);
        const std::size_t rows = n.grad.extent(0), cols = n.grad.extent(1);
        if (px.requires_grad)
            for (std::size_t i = 0; i < n.grad.size(); ++i) px.grad[i] += n.grad[i];
        if (pb.requires_grad)
            for (std::size_t i = 0; i < rows; ++i)
                for (std::size_t j = 0; j < cols; ++j) pb.grad[j] += n.grad(i, j);
    });
}

Var Tape::activation(Var x, Activation kind) {
    if (kind == Activation::identity) return x;
    const Tensor& xv = x.value();
    Tensor out = xv;
    if (kind == Activation::relu) {
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = out[i] > 0.0 ? out[i] : 0.0;
        return record(std::move(out), "relu", {x.id()}, [](Tape& t, const Node& n) {
            Node& pa = t.node(n.parents[0]);
            if (!pa.requires_grad) return;
            for (std::size_t i = 0; i < n.grad.size(); ++i)
                if (pa.value[i] > 0.0) pa.grad[i] += n.grad[i];
        });
    }
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double v = out[i];
        out[i] = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
    }
    return record(std::move(out), "sigmoid", {x.id()}, [](Tape& t, const Node& n) {
        Node& pa = t.node(n.parents[0]);
        if (!pa.requires_grad) return;
        for (std::size_t i = 0; i < n.grad.size(); ++i) {
            const double s = n.value[i];
            pa.grad[i] += n.grad[i] * s * (1.0 - s);
        }
    });
}

Var Tape::conv2d(Var input, Var weight, Var bias, std::size_t stride, std::size_t padding) {
    const Tensor& in = input.value();
    const Tensor& w = weight.value();
    const Tensor& b = bias.value();
    require_rank4(in, "conv2d");
    require_rank4(w, "conv2d weight");
    if (stride < 1) throw ValueError("conv2d: stride must be positive");
    const std::size_t N = in.extent(0), C = in.extent(1), H = in.extent(2), W = in.extent(3);
    const std::size_t F = w.extent(0), KH = w.extent(2), KW = w.extent(3);
    if (w.extent(1) != C) {
        throw ShapeError("conv2d: weight channels " + shape_string(w.shape()) + " do not match input " +
                         shape_string(in.shape()));
    }
    if (b.ndim() != 1 || b.extent(0) != F) {
        throw ShapeError("conv2d: bias " + shape_string(b.shape()) + " does not match filter count " +
                         std::to_string(F));
    }
    if (KH > H + 2 * padding || KW > W + 2 * padding) {
        throw ShapeError("conv2d: kernel " + std::to_string(KH) + "x" + std::to_string(KW) +
                         " exceeds padded input " + std::to_string(H + 2 * padding) + "x" +
                         std::to_string(W + 2 * padding));
    }
    const std::size_t OH = (H + 2 * padding - KH) / stride + 1;
    const std::size_t OW = (W + 2 * padding - KW) / stride + 1;

    Tensor out({N, F, OH, OW});
    // Cross-correlation with zero padding.
    const long long p = static_cast<long long>(padding);
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t f = 0; f < F; ++f)
            for (std::size_t oh = 0; oh < OH; ++oh)
                for (std::size_t ow = 0; ow < OW; ++ow) {
                    double acc = b[f];
                    for (std::size_t c = 0; c < C; ++c)
                        for (std::size_t kh = 0; kh < KH; ++kh) {
                            const long long ih = static_cast<long long>(oh * stride + kh) - p;
                            if (ih < 0 || ih >= static_cast<long long>(H)) continue;
                            for (std::size_t kw = 0; kw < KW; ++kw) {
                                const long long iw = static_cast<long long>(ow * stride + kw) - p;
                                if (iw < 0 || iw >= static_cast<long long>(W)) continue;
                                acc += in(n, c, static_cast<std::size_t>(ih), static_cast<std::size_t>(iw)) *
                                       w(f, c, kh, kw);
                            }
                        }
                    out(n, f, oh, ow) = acc;
                }

    return record(std::move(out), "conv2d", {input.id(), weight.id(), bias.id()},
                  [stride, padding](Tape& t, const Node& nd) {
                      Node& pin = t.node(nd.parents[0]);
                      Node& pw = t.node(nd.parents[1]);
                      Node& pb = t.node(nd.parents[2]);
                      const Tensor& in = pin.value;
                      const Tensor& w = pw.value;
                      const std::size_t N = in.extent(0), C = in.extent(1), H = in.extent(2), W = in.extent(3);
                      const std::size_t F = w.extent(0), KH = w.extent(2), KW = w.extent(3);
                      const std::size_t OH = nd.grad.extent(2), OW = nd.grad.extent(3);
                      const long long p = static_cast<long long>(padding);
                      for (std::size_t n = 0; n < N; ++n)
                          for (std::size_t f = 0; f < F; ++f)
                              for (std::size_t oh = 0; oh < OH; ++oh)
                                  for (std::size_t ow = 0; ow < OW; ++ow) {
                                      const double g = nd.grad(n, f, oh, ow);
                                      if (g == 0.0) continue;
                                      if (pb.requires_grad) pb.grad[f] += g;
                                      for (std::size_t c = 0; c < C; ++c)
                                          for (std::size_t kh = 0; kh < KH; ++kh) {
                                              const long long ih =
                                                  static_cast<long long>(oh * stride + kh) - p;
                                              if (ih < 0 || ih >= static_cast<long long>(H)) continue;
                                              for (std::size_t kw = 0; kw < KW; ++kw) {
                                                  const long long iw =
                                                      static_cast<long long>(ow * stride + kw) - p;
                                                  if (iw < 0 || iw >= static_cast<long long>(W)) continue;
                                                  const auto uh = static_cast<std::size_t>(ih);
                                                  const auto uw = static_cast<std::size_t>(iw);
                                                  if (pw.requires_grad)
                                                      pw.grad(f, c, kh, kw) += g * in(n, c, uh, uw);
                                                  if (pin.requires_grad)
                                                      pin.grad(n, c, uh, uw) += g * w(f, c, kh, kw);
                                              }
                                          }
                                  }
                  });
}

Var Tape::maxpool2d(Var input, std::size_t window, std::size_t stride) {
    const Tensor& in = input.value();
    require_rank4(in, "maxpool2d");
    if (window < 1 || stride < 1) throw ValueError("maxpool2d: window and stride must be positive");
    const std::size_t N = in.extent(0), C = in.extent(1), H = in.extent(2), W = in.extent(3);
    if (window > H || window > W) {
        throw ShapeError("maxpool2d: window " + std::to_string(window) + " exceeds input " +
                         std::to_string(H) + "x" + std::to_string(W));
    }
    const std::size_t OH = (H - window) / stride + 1;
    const std::size_t OW = (W - window) / stride + 1;
    Tensor out({N, C, OH, OW});
    // Argmax per window; ties go to the lowest flat index (first encountered
    // in row-major order) so gradients are deterministic.
    auto argmax = std::make_shared<std::vector<std::size_t>>(out.size());
    std::size_t o = 0;
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t c = 0; c < C; ++c)
            for (std::size_t oh = 0; oh < OH; ++oh)
                for (std::size_t ow = 0; ow < OW; ++ow, ++o) {
                    double best = -std::numeric_limits<double>::infinity();
                    std::size_t best_idx = 0;
                    for (std::size_t kh = 0; kh < window; ++kh)
                        for (std::size_t kw = 0; kw < window; ++kw) {
                            const std::size_t ih = oh * stride + kh, iw = ow * stride + kw;
                            const double v = in(n, c, ih, iw);
                            if (v > best) {
                                best = v;
                                best_idx = ((n * C + c) * H + ih) * W + iw;
                            }
                        }
                    out(n, c, oh, ow) = best;
                    (*argmax)[o] = best_idx;
                }
    return record(std::move(out), "maxpool2d", {input.id()}, [argmax](Tape& t, const Node& nd) {
        Node& pin = t.node(nd.parents[0]);
        if (!pin.requires_grad) return;
        for (std::size_t i = 0; i < nd.grad.size(); ++i) pin.grad[(*argmax)[i]] += nd.grad[i];
    });
}

Var Tape::upsample_nearest2d(Var input, std::size_t out_h, std::size_t out_w) {
    const Tensor& in = input.value();
    require_rank4(in, "upsample_nearest2d");
    if (out_h < in.extent(2) || out_w < in.extent(3)) {
        throw ShapeError("upsample_nearest2d: target " + std::to_string(out_h) + "x" + std::to_string(out_w) +
                         " smaller than input " + shape_string(in.shape()));
    }
    const std::size_t N = in.extent(0), C = in.extent(1), H = in.extent(2), W = in.extent(3);
    Tensor out({N, C, out_h, out_w});
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t c = 0; c < C; ++c)
            for (std::size_t oh = 0; oh < out_h; ++oh) {
                const std::size_t ih = oh * H / out_h;
                for (std::size_t ow = 0; ow < out_w; ++ow) out(n, c, oh, ow) = in(n, c, ih, ow * W / out_w);
            }
    return record(std::move(out), "upsample_nearest2d", {input.id()}, [](Tape& t, const Node& nd) {
        Node& pin = t.node(nd.parents[0]);
        if (!pin.requires_grad) return;
        const Tensor& in = pin.value;
        const std::size_t N = in.extent(0), C = in.extent(1), H = in.extent(2), W = in.extent(3);
        const std::size_t OH = nd.grad.extent(2), OW = nd.grad.extent(3);
        for (std::size_t n = 0; n < N; ++n)
            for (std::size_t c = 0; c < C; ++c)
                for (std::size_t oh = 0; oh < OH; ++oh) {
                    const std::size_t ih = oh * H / OH;
                    for (std::size_t ow = 0; ow < OW; ++ow)
                        pin.grad(n, c, ih, ow * W / OW) += nd.grad(n, c, oh, ow);
                }
    });
}

Var Tape::sum(Var a) {
    double acc = 0.0;
    for (double v : a.value().values()) acc += v;
    return record(Tensor::scalar(acc), "sum", {a.id()}, [](Tape& t, const Node& nd) {
        Node& pa = t.node(nd.parents[0]);
        if (!pa.requires_grad) return;
        const double g = nd.grad[0];
        for (std::size_t i = 0; i < pa.grad.size(); ++i) pa.grad[i] += g;
    });
}

Var Tape::mse_loss(Var pred, const Tensor& target) {
    require_same_shape(pred.value(), target, "mse_loss");
    const Tensor& pv = pred.value();
    double acc = 0.0;
    for (std::size_t i = 0; i < pv.size(); ++i) {
        const double d = pv[i] - target[i];
        acc += d * d;
    }
    const double count = static_cast<double>(pv.size());
    auto tgt = std::make_shared<Tensor>(target);
    return record(Tensor::scalar(acc / count), "mse_loss", {pred.id()}, [tgt, count](Tape& t, const Node& nd) {
        Node& pp = t.node(nd.parents[0]);
        if (!pp.requires_grad) return;
        const double g = nd.grad[0] * 2.0 / count;
        for (std::size_t i = 0; i < pp.grad.size(); ++i) pp.grad[i] += g * (pp.value[i] - (*tgt)[i]);
    });
}

Var Tape::cross_entropy_loss(Var logits, std::span<const int> labels) {
    const Tensor& lv = logits.value();
    require_rank2(lv, "cross_entropy_loss");
    const std::size_t N = lv.extent(0), K = lv.extent(1);
    if (labels.size() != N) {
        throw ShapeError("cross_entropy_loss: " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(N) + " rows");
    }
    for (int y : labels) {
        if (y < 0 || static_cast<std::size_t>(y) >= K) throw ValueError("cross_entropy_loss: label out of range");
    }
    // Stable log-softmax; backward uses softmax(logits) - onehot, over N.
    auto probs = std::make_shared<Tensor>(Tensor::zeros({N, K}));
    double loss = 0.0;
    for (std::size_t i = 0; i < N; ++i) {
        double mx = lv(i, 0);
        for (std::size_t k = 1; k < K; ++k) mx = std::max(mx, lv(i, k));
        double denom = 0.0;
        for (std::size_t k = 0; k < K; ++k) denom += std::exp(lv(i, k) - mx);
        for (std::size_t k = 0; k < K; ++k) (*probs)(i, k) = std::exp(lv(i, k) - mx) / denom;
        loss -= (lv(i, static_cast<std::size_t>(labels[i])) - mx - std::log(denom));
    }
    auto ys = std::make_shared<std::vector<int>>(labels.begin(), labels.end());
    return record(Tensor::scalar(loss / static_cast<double>(N)), "cross_entropy_loss", {logits.id()},
                  [probs, ys](Tape& t, const Node& nd) {
                      Node& pl = t.node(nd.parents[0]);
                      if (!pl.requires_grad) return;
                      const std::size_t N = pl.value.extent(0), K = pl.value.extent(1);
                      const double g = nd.grad[0] / static_cast<double>(N);
                      for (std::size_t i = 0; i < N; ++i)
                          for (std::size_t k = 0; k < K; ++k) {
                              const double onehot = (static_cast<std::size_t>((*ys)[i]) == k) ? 1.0 : 0.0;
                              pl.grad(i, k) += g * ((*probs)(i, k) - onehot);
                          }
                  });
}

}  // namespace mmrl
