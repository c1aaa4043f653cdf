#include "rfcn/autodiff.hpp"

#include <cmath>
#include <string>
#include <utility>

#include "rfcn/error.hpp"

namespace rfcn {

using kernels::Conv2dGeom;
using kernels::Pool2dGeom;

Var Tape::leaf(Tensor value) {
    slots_.push_back({std::move(value), nullptr, Tensor()});
    node_of_slot_.push_back(-1);
    return Var{static_cast<int>(slots_.size()) - 1};
}

Var Tape::leaf_ref(const Tensor& value) {
    slots_.push_back({Tensor(), &value, Tensor()});
    node_of_slot_.push_back(-1);
    return Var{static_cast<int>(slots_.size()) - 1};
}

Var Tape::make_node(Tensor value, Pull pull) {
    slots_.push_back({std::move(value), nullptr, Tensor()});
    nodes_.push_back({static_cast<int>(slots_.size()) - 1, std::move(pull)});
    node_of_slot_.push_back(static_cast<int>(nodes_.size()) - 1);
    return Var{static_cast<int>(slots_.size()) - 1};
}

void Tape::backward(Var output, const Tensor& seed) {
    if (slots_.empty()) throw ArgumentError("backward: empty record");
    const Tensor& out_val = value(output);
    if (seed.shape() != out_val.shape()) {
        throw DimensionError("backward: seed shape " + seed.shape_str() +
                             " does not match output shape " + out_val.shape_str());
    }
    for (auto& s : slots_) s.grad = Tensor(s.ref ? s.ref->shape() : s.value.shape());
    slots_[static_cast<size_t>(output.slot)].grad = seed;
    const int last = node_of_slot_[static_cast<size_t>(output.slot)];
    for (int i = last; i >= 0; --i) {
        const Node& n = nodes_[static_cast<size_t>(i)];
        n.pull(*this, Var{n.out_slot});
    }
}

void Tape::backward(Var output) { backward(output, Tensor::ones(value(output).shape())); }

Var conv2d(Tape& t, Var x, Var k, std::optional<Var> bias, int stride, int pad) {
    const Tensor& xv = t.value(x);
    const Tensor& kv = t.value(k);
    Conv2dGeom g = Conv2dGeom::infer(xv.shape(), kv.shape(), stride, pad);
    if (bias) {
        const Tensor& bv = t.value(*bias);
        if (bv.rank() != 1 || bv.extent(0) != g.out_c) {
            throw DimensionError("conv2d: bias shape " + bv.shape_str() + " does not match " +
                                 std::to_string(g.out_c) + " output channels");
        }
    }
    Tensor out({g.out_c, g.out_h, g.out_w});
    kernels::conv2d_forward(out.data(), xv.data(), kv.data(),
                            bias ? t.value(*bias).data() : nullptr, g);
    const int xs = x.slot, ks = k.slot, bs = bias ? bias->slot : -1;
    return t.make_node(std::move(out), [xs, ks, bs, g](Tape& tp, Var o) {
        const Tensor& dy = tp.grad(o);
        kernels::conv2d_backward_input(tp.grad_mut(Var{xs}).data(), dy.data(),
                                       tp.value(Var{ks}).data(), g);
        kernels::conv2d_backward_kernels(tp.grad_mut(Var{ks}).data(), dy.data(),
                                         tp.value(Var{xs}).data(), g);
        if (bs >= 0) kernels::conv2d_backward_bias(tp.grad_mut(Var{bs}).data(), dy.data(), g);
    });
}

Var transposed_conv2d(Tape& t, Var x, Var k, int stride, int target_h, int target_w) {
    const Tensor& xv = t.value(x);
    const Tensor& kv = t.value(k);
    if (xv.rank() != 3) {
        throw DimensionError("transposed_conv2d: input must be CxHxW, got " + xv.shape_str());
    }
    if (kv.rank() != 4 || kv.extent(0) != xv.extent(0)) {
        throw DimensionError("transposed_conv2d: kernels must be CinxCoutxKHxKW with Cin=" +
                             std::to_string(xv.extent(0)) + ", got " + kv.shape_str());
    }
    if (stride < 1) throw ArgumentError("transposed_conv2d: stride must be >= 1");
    const int cin = xv.extent(0), h = xv.extent(1), w = xv.extent(2);
    const int cout = kv.extent(1), kh = kv.extent(2), kw = kv.extent(3);
    const int raw_h = (h - 1) * stride + kh;
    const int raw_w = (w - 1) * stride + kw;
    if (target_h > raw_h || target_w > raw_w || target_h < 1 || target_w < 1) {
        throw DimensionError("transposed_conv2d: target " + std::to_string(target_h) + "x" +
                             std::to_string(target_w) + " exceeds raw upsampled extent " +
                             std::to_string(raw_h) + "x" + std::to_string(raw_w));
    }
    // Exact adjoint of conv2d(raw, k, stride, pad=0) -> CinxHxW, followed by a
    // symmetric center crop of the raw map to the requested target.
    Conv2dGeom g;
    g.in_c = cout;
    g.in_h = raw_h;
    g.in_w = raw_w;
    g.out_c = cin;
    g.kh = kh;
    g.kw = kw;
    g.stride = stride;
    g.pad = 0;
    g.pad_before = 0;
    g.out_h = h;
    g.out_w = w;

    Tensor raw({cout, raw_h, raw_w});
    kernels::conv2d_backward_input(raw.data(), xv.data(), kv.data(), g);
    const int oy0 = (raw_h - target_h) / 2;
    const int ox0 = (raw_w - target_w) / 2;
    Tensor out({cout, target_h, target_w});
    for (int c = 0; c < cout; ++c)
        for (int y = 0; y < target_h; ++y)
            for (int xx = 0; xx < target_w; ++xx) out.at(c, y, xx) = raw.at(c, y + oy0, xx + ox0);

    const int xs = x.slot, ks = k.slot;
    return t.make_node(std::move(out), [xs, ks, g, oy0, ox0, target_h, target_w](Tape& tp, Var o) {
        const Tensor& dy = tp.grad(o);
        // Re-embed the cropped gradient into raw coordinates.
        Tensor raw_dy({g.in_c, g.in_h, g.in_w});
        for (int c = 0; c < g.in_c; ++c)
            for (int y = 0; y < target_h; ++y)
                for (int xx = 0; xx < target_w; ++xx)
                    raw_dy.at(c, y + oy0, xx + ox0) = dy.at(c, y, xx);
        // d/dx of the adjoint is the paired forward convolution.
        Tensor dx_tmp({g.out_c, g.out_h, g.out_w});
        kernels::conv2d_forward(dx_tmp.data(), raw_dy.data(), tp.value(Var{ks}).data(), nullptr, g);
        Tensor& dx = tp.grad_mut(Var{xs});
        kernels::axpy(dx.data(), 1.0, dx_tmp.data(), dx.size());
        kernels::conv2d_backward_kernels(tp.grad_mut(Var{ks}).data(),
                                         tp.value(Var{xs}).data(), raw_dy.data(), g);
    });
}

Var maxpool2d(Tape& t, Var x, int k, int stride) {
    const Tensor& xv = t.value(x);
    Pool2dGeom g = Pool2dGeom::infer(xv.shape(), k, stride);
    Tensor out({g.c, g.out_h, g.out_w});
    std::vector<std::int32_t> argmax(static_cast<size_t>(g.out_size()));
    kernels::maxpool2d_forward(out.data(), argmax.data(), xv.data(), g);
    const int xs = x.slot;
    return t.make_node(std::move(out), [xs, g, argmax = std::move(argmax)](Tape& tp, Var o) {
        kernels::maxpool2d_backward(tp.grad_mut(Var{xs}).data(), tp.grad(o).data(), argmax.data(),
                                    g);
    });
}

Var activation(Tape& t, Var x, Act a) {
    const Tensor& xv = t.value(x);
    Tensor out(xv.shape());
    kernels::act_forward(out.data(), xv.data(), xv.size(), a);
    const int xs = x.slot;
    return t.make_node(std::move(out), [xs, a](Tape& tp, Var o) {
        const Tensor& dy = tp.grad(o);
        kernels::act_backward(tp.grad_mut(Var{xs}).data(), dy.data(), tp.value(Var{xs}).data(),
                              tp.value(o).data(), dy.size(), a);
    });
}

Var dense(Tape& t, Var x, Var w, std::optional<Var> bias) {
    const Tensor& xv = t.value(x);
    const Tensor& wv = t.value(w);
    if (wv.rank() != 2) throw DimensionError("dense: weights must be MxN, got " + wv.shape_str());
    const int m = wv.extent(0), n = wv.extent(1);
    if (xv.size() != n) {
        throw DimensionError("dense: input length " + std::to_string(xv.size()) +
                             " does not match weights " + wv.shape_str());
    }
    if (bias) {
        const Tensor& bv = t.value(*bias);
        if (bv.size() != m) {
            throw DimensionError("dense: bias " + bv.shape_str() + " does not match " +
                                 std::to_string(m) + " outputs");
        }
    }
    Tensor out({m});
    kernels::dense_forward(out.data(), xv.data(), wv.data(), bias ? t.value(*bias).data() : nullptr,
                           m, n);
    const int xs = x.slot, ws = w.slot, bs = bias ? bias->slot : -1;
    return t.make_node(std::move(out), [xs, ws, bs, m, n](Tape& tp, Var o) {
        const Tensor& dy = tp.grad(o);
        kernels::dense_backward_input(tp.grad_mut(Var{xs}).data(), dy.data(),
                                      tp.value(Var{ws}).data(), m, n);
        kernels::dense_backward_weights(tp.grad_mut(Var{ws}).data(), dy.data(),
                                        tp.value(Var{xs}).data(), m, n);
        if (bs >= 0) kernels::axpy(tp.grad_mut(Var{bs}).data(), 1.0, dy.data(), m);
    });
}

Var add(Tape& t, Var a, Var b) {
    const Tensor& av = t.value(a);
    const Tensor& bv = t.value(b);
    require_same_shape(av, bv, "add");
    Tensor out(av.shape());
    kernels::add_forward(out.data(), av.data(), bv.data(), out.size());
    const int as = a.slot, bs = b.slot;
    return t.make_node(std::move(out), [as, bs](Tape& tp, Var o) {
        const Tensor& dy = tp.grad(o);
        kernels::axpy(tp.grad_mut(Var{as}).data(), 1.0, dy.data(), dy.size());
        kernels::axpy(tp.grad_mut(Var{bs}).data(), 1.0, dy.data(), dy.size());
    });
}

Var mul(Tape& t, Var a, Var b) {
    const Tensor& av = t.value(a);
    const Tensor& bv = t.value(b);
    require_same_shape(av, bv, "elementwise_mul");
    Tensor out(av.shape());
    kernels::mul_forward(out.data(), av.data(), bv.data(), out.size());
    const int as = a.slot, bs = b.slot;
    return t.make_node(std::move(out), [as, bs](Tape& tp, Var o) {
        const Tensor& dy = tp.grad(o);
        const Tensor& avv = tp.value(Var{as});
        const Tensor& bvv = tp.value(Var{bs});
        Tensor& da = tp.grad_mut(Var{as});
        Tensor& db = tp.grad_mut(Var{bs});
        for (std::int64_t i = 0; i < dy.size(); ++i) {
            da[i] += dy[i] * bvv[i];
            db[i] += dy[i] * avv[i];
        }
    });
}

Var one_minus(Tape& t, Var x) {
    const Tensor& xv = t.value(x);
    Tensor out(xv.shape());
    for (std::int64_t i = 0; i < xv.size(); ++i) out[i] = 1.0 - xv[i];
    const int xs = x.slot;
    return t.make_node(std::move(out), [xs](Tape& tp, Var o) {
        const Tensor& dy = tp.grad(o);
        kernels::axpy(tp.grad_mut(Var{xs}).data(), -1.0, dy.data(), dy.size());
    });
}

Var reshape(Tape& t, Var x, Shape s) {
    Tensor out = t.value(x).reshaped(std::move(s));
    const int xs = x.slot;
    return t.make_node(std::move(out), [xs](Tape& tp, Var o) {
        const Tensor& dy = tp.grad(o);
        kernels::axpy(tp.grad_mut(Var{xs}).data(), 1.0, dy.data(), dy.size());
    });
}

Var flatten(Tape& t, Var x) {
    return reshape(t, x, {static_cast<int>(t.value(x).size())});
}

Var logistic_loss_op(Tape& t, Var pred, const Tensor& target, double eps) {
    const Tensor& pv = t.value(pred);
    require_same_shape(pv, target, "logistic_loss");
    for (std::int64_t i = 0; i < target.size(); ++i) {
        if (target[i] != 0.0 && target[i] != 1.0) {
            throw ArgumentError("logistic_loss: target is not binary at index " +
                                std::to_string(i));
        }
    }
    const double n = static_cast<double>(pv.size());
    double acc = 0.0;
    for (std::int64_t i = 0; i < pv.size(); ++i) {
        const double p = std::min(1.0 - eps, std::max(eps, pv[i]));
        acc -= target[i] * std::log(p) + (1.0 - target[i]) * std::log(1.0 - p);
    }
    Tensor out({1}, {acc / n});
    const int ps = pred.slot;
    return t.make_node(std::move(out), [ps, target, eps, n](Tape& tp, Var o) {
        const double gy = tp.grad(o)[0];
        const Tensor& p = tp.value(Var{ps});
        Tensor& dp = tp.grad_mut(Var{ps});
        for (std::int64_t i = 0; i < p.size(); ++i) {
            if (p[i] < eps || p[i] > 1.0 - eps) continue;  // clamped: flat
            dp[i] += gy * (-target[i] / p[i] + (1.0 - target[i]) / (1.0 - p[i])) / n;
        }
    });
}

}  // namespace rfcn
