#include "stylefuse/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "stylefuse/errors.hpp"
#include "stylefuse/rng.hpp"

namespace sf {

const Tensor& Var::value() const { return tape->value(id); }

Var Tape::constant(Tensor value) {
    nodes_.push_back(Node{std::move(value), {}, false, {}, {}});
    return Var{this, nodes_.size() - 1};
}

Var Tape::parameter(Tensor value) {
    nodes_.push_back(Node{std::move(value), {}, true, {}, {}});
    return Var{this, nodes_.size() - 1};
}

Var Tape::record(Tensor value, std::vector<std::size_t> inputs, BackwardFn backward) {
    bool needs = false;
    for (auto in : inputs) {
        if (in >= nodes_.size()) throw ContractError("tape: input node recorded out of order");
        needs = needs || nodes_[in].requires_grad;
    }
    nodes_.push_back(Node{std::move(value), {}, needs, std::move(inputs), needs ? std::move(backward) : BackwardFn{}});
    return Var{this, nodes_.size() - 1};
}

Tensor& Tape::grad_buffer(std::size_t id) {
    Node& n = nodes_.at(id);
    if (n.grad.empty()) n.grad = Tensor::zeros(n.value.shape());
    return n.grad;
}

void Tape::backward(Var out) {
    if (out.tape != this) throw ContractError("backward: variable belongs to another tape");
    if (value(out.id).size() != 1) {
        throw ContractError("backward: output must be scalar, got shape " + shape_str(value(out.id).shape()));
    }
    if (consumed_) throw ContractError("backward: tape already consumed by a backward pass");
    consumed_ = true;
    visits_ = 0;
    grad_buffer(out.id)[0] = 1.0;
    for (std::size_t id = out.id + 1; id-- > 0;) {
        Node& n = nodes_[id];
        ++visits_;
        if (!n.requires_grad || !n.backward || n.grad.empty()) continue;
        n.backward(*this, id);
    }
}

Tensor Tape::grad(Var v) const {
    const Node& n = nodes_.at(v.id);
    if (n.grad.empty()) return Tensor::zeros(n.value.shape());
    return n.grad;
}

namespace {

Tape& tape_of(Var a, Var b) {
    if (a.tape == nullptr || a.tape != b.tape) throw ContractError("operands recorded on different tapes");
    return *a.tape;
}

}  // namespace

namespace {

struct ConvGeom {
    std::size_t cin, h, w, cout, k, ho, wo;
    std::ptrdiff_t pad;

    // Output coordinates o with 0 <= o + kk - pad < n, for kernel offset kk.
    std::pair<std::ptrdiff_t, std::ptrdiff_t> valid(std::size_t kk, std::size_t n, std::size_t nout) const {
        const std::ptrdiff_t off = static_cast<std::ptrdiff_t>(kk) - pad;
        const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, -off);
        const std::ptrdiff_t hi =
            std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(nout), static_cast<std::ptrdiff_t>(n) - off);
        return {lo, std::max(lo, hi)};
    }
};

// Output channels are processed four at a time so every loaded input row
// feeds four accumulators.
constexpr std::size_t kChannelBlock = 4;

void conv_forward(const ConvGeom& g, const double* x, const double* w, const double* b, double* y) {
    const std::size_t plane = g.ho * g.wo;
    for (std::size_t co = 0; co < g.cout; ++co) std::fill(y + co * plane, y + (co + 1) * plane, b[co]);
    for (std::size_t co0 = 0; co0 < g.cout; co0 += kChannelBlock) {
        const std::size_t nb = std::min(kChannelBlock, g.cout - co0);
        for (std::size_t ci = 0; ci < g.cin; ++ci) {
            const double* xc = x + ci * g.h * g.w;
            for (std::size_t ky = 0; ky < g.k; ++ky) {
                const auto [ylo, yhi] = g.valid(ky, g.h, g.ho);
                for (std::size_t kx = 0; kx < g.k; ++kx) {
                    const auto [xlo, xhi] = g.valid(kx, g.w, g.wo);
                    const std::ptrdiff_t dy = static_cast<std::ptrdiff_t>(ky) - g.pad;
                    const std::ptrdiff_t dx = static_cast<std::ptrdiff_t>(kx) - g.pad;
                    double wv[kChannelBlock] = {0.0, 0.0, 0.0, 0.0};
                    for (std::size_t j = 0; j < nb; ++j) wv[j] = w[(((co0 + j) * g.cin + ci) * g.k + ky) * g.k + kx];
                    for (std::ptrdiff_t oy = ylo; oy < yhi; ++oy) {
                        const double* xr = xc + (oy + dy) * static_cast<std::ptrdiff_t>(g.w) + dx;
                        const std::ptrdiff_t yoff = oy * static_cast<std::ptrdiff_t>(g.wo);
                        if (nb == kChannelBlock) {
                            double* y0 = y + co0 * plane + yoff;
                            double* y1 = y0 + plane;
                            double* y2 = y1 + plane;
                            double* y3 = y2 + plane;
                            for (std::ptrdiff_t ox = xlo; ox < xhi; ++ox) {
                                const double xv = xr[ox];
                                y0[ox] += wv[0] * xv;
                                y1[ox] += wv[1] * xv;
                                y2[ox] += wv[2] * xv;
                                y3[ox] += wv[3] * xv;
                            }
                        } else {
                            for (std::size_t j = 0; j < nb; ++j) {
                                double* yr = y + (co0 + j) * plane + yoff;
                                for (std::ptrdiff_t ox = xlo; ox < xhi; ++ox) yr[ox] += wv[j] * xr[ox];
                            }
                        }
                    }
                }
            }
        }
    }
}

// gx[ci] += sum_co w[co,ci] (*) gy[co], blocked over input channels.
void conv_backward_input(const ConvGeom& g, const double* gy, const double* w, double* gx) {
    const std::size_t plane = g.ho * g.wo, in_plane = g.h * g.w;
    for (std::size_t ci0 = 0; ci0 < g.cin; ci0 += kChannelBlock) {
        const std::size_t nb = std::min(kChannelBlock, g.cin - ci0);
        for (std::size_t co = 0; co < g.cout; ++co) {
            const double* gc = gy + co * plane;
            for (std::size_t ky = 0; ky < g.k; ++ky) {
                const auto [ylo, yhi] = g.valid(ky, g.h, g.ho);
                for (std::size_t kx = 0; kx < g.k; ++kx) {
                    const auto [xlo, xhi] = g.valid(kx, g.w, g.wo);
                    const std::ptrdiff_t dy = static_cast<std::ptrdiff_t>(ky) - g.pad;
                    const std::ptrdiff_t dx = static_cast<std::ptrdiff_t>(kx) - g.pad;
                    double wv[kChannelBlock] = {0.0, 0.0, 0.0, 0.0};
                    for (std::size_t j = 0; j < nb; ++j) wv[j] = w[((co * g.cin + ci0 + j) * g.k + ky) * g.k + kx];
                    for (std::ptrdiff_t oy = ylo; oy < yhi; ++oy) {
                        const double* gr = gc + oy * static_cast<std::ptrdiff_t>(g.wo);
                        const std::ptrdiff_t xoff = (oy + dy) * static_cast<std::ptrdiff_t>(g.w) + dx;
                        if (nb == kChannelBlock) {
                            double* x0 = gx + ci0 * in_plane + xoff;
                            double* x1 = x0 + in_plane;
                            double* x2 = x1 + in_plane;
                            double* x3 = x2 + in_plane;
                            for (std::ptrdiff_t ox = xlo; ox < xhi; ++ox) {
                                const double gv = gr[ox];
                                x0[ox] += wv[0] * gv;
                                x1[ox] += wv[1] * gv;
                                x2[ox] += wv[2] * gv;
                                x3[ox] += wv[3] * gv;
                            }
                        } else {
                            for (std::size_t j = 0; j < nb; ++j) {
                                double* xr = gx + (ci0 + j) * in_plane + xoff;
                                for (std::ptrdiff_t ox = xlo; ox < xhi; ++ox) xr[ox] += wv[j] * gr[ox];
                            }
                        }
                    }
                }
            }
        }
    }
}

void conv_backward_kernel(const ConvGeom& g, const double* gy, const double* x, double* gw) {
    const std::size_t plane = g.ho * g.wo;
    for (std::size_t co = 0; co < g.cout; ++co) {
        const double* gc = gy + co * plane;
        for (std::size_t ci = 0; ci < g.cin; ++ci) {
            const double* xc = x + ci * g.h * g.w;
            for (std::size_t ky = 0; ky < g.k; ++ky) {
                const auto [ylo, yhi] = g.valid(ky, g.h, g.ho);
                for (std::size_t kx = 0; kx < g.k; ++kx) {
                    const auto [xlo, xhi] = g.valid(kx, g.w, g.wo);
                    const std::ptrdiff_t dy = static_cast<std::ptrdiff_t>(ky) - g.pad;
                    const std::ptrdiff_t dx = static_cast<std::ptrdiff_t>(kx) - g.pad;
                    double acc = 0.0;
                    for (std::ptrdiff_t oy = ylo; oy < yhi; ++oy) {
                        const double* gr = gc + oy * static_cast<std::ptrdiff_t>(g.wo);
                        const double* xr = xc + (oy + dy) * static_cast<std::ptrdiff_t>(g.w) + dx;
                        for (std::ptrdiff_t ox = xlo; ox < xhi; ++ox) acc += gr[ox] * xr[ox];
                    }
                    gw[((co * g.cin + ci) * g.k + ky) * g.k + kx] += acc;
                }
            }
        }
    }
}

}  // namespace

Var conv2d(Var input, Var kernel, Var bias, std::size_t pad) {
    Tape& tape = tape_of(input, kernel);
    tape_of(input, bias);
    const Tensor& x = input.value();
    const Tensor& w = kernel.value();
    const Tensor& b = bias.value();
    if (x.rank() != 3 || w.rank() != 4 || b.rank() != 1) {
        throw DimensionError("conv2d: expected input [Cin,H,W], kernel [Cout,Cin,k,k], bias [Cout]; got " +
                             shape_str(x.shape()) + ", " + shape_str(w.shape()) + ", " + shape_str(b.shape()));
    }
    ConvGeom g{};
    g.cin = x.dim(0);
    g.h = x.dim(1);
    g.w = x.dim(2);
    g.cout = w.dim(0);
    g.k = w.dim(2);
    if (w.dim(1) != g.cin || w.dim(3) != g.k || b.dim(0) != g.cout) {
        throw DimensionError("conv2d: inconsistent shapes input " + shape_str(x.shape()) + ", kernel " +
                             shape_str(w.shape()) + ", bias " + shape_str(b.shape()));
    }
    if (g.k % 2 == 0) throw DimensionError("conv2d: kernel size must be odd, got kernel " + shape_str(w.shape()));
    if (g.h + 2 * pad < g.k || g.w + 2 * pad < g.k) {
        throw DimensionError("conv2d: kernel " + shape_str(w.shape()) + " larger than padded input " +
                             shape_str(x.shape()));
    }
    g.ho = g.h + 2 * pad - g.k + 1;
    g.wo = g.w + 2 * pad - g.k + 1;
    g.pad = static_cast<std::ptrdiff_t>(pad);

    Tensor y({g.cout, g.ho, g.wo});
    conv_forward(g, x.data().data(), w.data().data(), b.data().data(), y.data().data());

    const std::size_t xi = input.id, ki = kernel.id, bi = bias.id;
    return tape.record(std::move(y), {xi, ki, bi}, [=](Tape& t, std::size_t self) {
        const double* gy = t.grad_buffer(self).data().data();
        if (t.requires_grad(bi)) {
            Tensor& gb = t.grad_buffer(bi);
            const std::size_t plane = g.ho * g.wo;
            for (std::size_t co = 0; co < g.cout; ++co)
                gb[co] += std::accumulate(gy + co * plane, gy + (co + 1) * plane, 0.0);
        }
        if (t.requires_grad(xi)) conv_backward_input(g, gy, t.value(ki).data().data(), t.grad_buffer(xi).data().data());
        if (t.requires_grad(ki)) conv_backward_kernel(g, gy, t.value(xi).data().data(), t.grad_buffer(ki).data().data());
    });
}

Var leaky_relu(Var x, double slope) {
    if (!(slope > 0.0 && slope < 1.0)) throw ContractError("leaky_relu: slope must lie in (0,1)");
    const Tensor& xv = x.value();
    Tensor y(xv.shape());
    for (std::size_t i = 0; i < xv.size(); ++i) y[i] = xv[i] >= 0.0 ? xv[i] : slope * xv[i];
    const std::size_t xi = x.id;
    return x.tape->record(std::move(y), {xi}, [=](Tape& t, std::size_t self) {
        const Tensor& g = t.grad_buffer(self);
        const Tensor& in = t.value(xi);
        Tensor& gx = t.grad_buffer(xi);
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += in[i] >= 0.0 ? g[i] : slope * g[i];
    });
}

Var upsample2x(Var x) {
    const Tensor& xv = x.value();
    require_rank(xv, 3, "upsample2x");
    const std::size_t c = xv.dim(0), h = xv.dim(1), w = xv.dim(2);
    Tensor y({c, 2 * h, 2 * w});
    for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t yy = 0; yy < 2 * h; ++yy)
            for (std::size_t xx = 0; xx < 2 * w; ++xx) y.at(ch, yy, xx) = xv.at(ch, yy / 2, xx / 2);
    const std::size_t xi = x.id;
    return x.tape->record(std::move(y), {xi}, [=](Tape& t, std::size_t self) {
        const Tensor& g = t.grad_buffer(self);
        Tensor& gx = t.grad_buffer(xi);
        for (std::size_t ch = 0; ch < c; ++ch)
            for (std::size_t yy = 0; yy < 2 * h; ++yy)
                for (std::size_t xx = 0; xx < 2 * w; ++xx) gx.at(ch, yy / 2, xx / 2) += g.at(ch, yy, xx);
    });
}

Var downsample2x(Var x) {
    const Tensor& xv = x.value();
    require_rank(xv, 3, "downsample2x");
    const std::size_t c = xv.dim(0), h = xv.dim(1) / 2, w = xv.dim(2) / 2;
    if (h == 0 || w == 0) throw DimensionError("downsample2x: input too small " + shape_str(xv.shape()));
    Tensor y({c, h, w});
    for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t yy = 0; yy < h; ++yy)
            for (std::size_t xx = 0; xx < w; ++xx)
                y.at(ch, yy, xx) = 0.25 * (xv.at(ch, 2 * yy, 2 * xx) + xv.at(ch, 2 * yy, 2 * xx + 1) +
                                           xv.at(ch, 2 * yy + 1, 2 * xx) + xv.at(ch, 2 * yy + 1, 2 * xx + 1));
    const std::size_t xi = x.id;
    return x.tape->record(std::move(y), {xi}, [=](Tape& t, std::size_t self) {
        const Tensor& g = t.grad_buffer(self);
        Tensor& gx = t.grad_buffer(xi);
        for (std::size_t ch = 0; ch < c; ++ch)
            for (std::size_t yy = 0; yy < h; ++yy)
                for (std::size_t xx = 0; xx < w; ++xx) {
                    const double q = 0.25 * g.at(ch, yy, xx);
                    gx.at(ch, 2 * yy, 2 * xx) += q;
                    gx.at(ch, 2 * yy, 2 * xx + 1) += q;
                    gx.at(ch, 2 * yy + 1, 2 * xx) += q;
                    gx.at(ch, 2 * yy + 1, 2 * xx + 1) += q;
                }
    });
}

Var adain(Var x, Var scale, Var shift, double eps) {
    Tape& tape = tape_of(x, scale);
    tape_of(x, shift);
    if (!(eps > 0.0)) throw ContractError("adain: eps must be positive");
    const Tensor& xv = x.value();
    require_rank(xv, 3, "adain");
    const std::size_t c = xv.dim(0), n = xv.dim(1) * xv.dim(2);
    const Tensor& sv = scale.value();
    const Tensor& bv = shift.value();
    if (sv.shape() != Shape{c} || bv.shape() != Shape{c}) {
        throw DimensionError("adain: scale/shift " + shape_str(sv.shape()) + "/" + shape_str(bv.shape()) +
                             " do not match " + std::to_string(c) + " channels");
    }
    Tensor xhat(xv.shape());
    std::vector<double> inv_std(c);
    Tensor y(xv.shape());
    for (std::size_t ch = 0; ch < c; ++ch) {
        const double* xc = xv.data().data() + ch * n;
        double mean = 0.0;
        for (std::size_t i = 0; i < n; ++i) mean += xc[i];
        mean /= static_cast<double>(n);
        double var = 0.0;
        for (std::size_t i = 0; i < n; ++i) var += (xc[i] - mean) * (xc[i] - mean);
        var /= static_cast<double>(n);
        const double inv = 1.0 / std::sqrt(var + eps);
        inv_std[ch] = inv;
        double* hc = xhat.data().data() + ch * n;
        double* yc = y.data().data() + ch * n;
        for (std::size_t i = 0; i < n; ++i) {
            hc[i] = (xc[i] - mean) * inv;
            yc[i] = sv[ch] * hc[i] + bv[ch];
        }
    }
    const std::size_t xi = x.id, si = scale.id, bi = shift.id;
    return tape.record(std::move(y), {xi, si, bi},
                       [=, xhat = std::move(xhat), inv_std = std::move(inv_std)](Tape& t, std::size_t self) {
                           const Tensor& g = t.grad_buffer(self);
                           const Tensor& sc = t.value(si);
                           const bool need_x = t.requires_grad(xi);
                           const bool need_s = t.requires_grad(si);
                           const bool need_b = t.requires_grad(bi);
                           for (std::size_t ch = 0; ch < c; ++ch) {
                               const double* gc = g.data().data() + ch * n;
                               const double* hc = xhat.data().data() + ch * n;
                               double sum_g = 0.0, sum_gh = 0.0;
                               for (std::size_t i = 0; i < n; ++i) {
                                   sum_g += gc[i];
                                   sum_gh += gc[i] * hc[i];
                               }
                               if (need_s) t.grad_buffer(si)[ch] += sum_gh;
                               if (need_b) t.grad_buffer(bi)[ch] += sum_g;
                               if (need_x) {
                                   double* gx = t.grad_buffer(xi).data().data() + ch * n;
                                   const double nn = static_cast<double>(n);
                                   const double mg = sum_g / nn, mgh = sum_gh / nn;
                                   const double k = sc[ch] * inv_std[ch];
                                   for (std::size_t i = 0; i < n; ++i) gx[i] += k * (gc[i] - mg - hc[i] * mgh);
                               }
                           }
                       });
}

Var add_noise(Var x, const Tensor& noise, Var strength) {
    Tape& tape = tape_of(x, strength);
    const Tensor& xv = x.value();
    require_rank(xv, 3, "add_noise");
    const std::size_t c = xv.dim(0), n = xv.dim(1) * xv.dim(2);
    if (noise.shape() != Shape{1, xv.dim(1), xv.dim(2)} || strength.value().shape() != Shape{c}) {
        throw DimensionError("add_noise: noise " + shape_str(noise.shape()) + " / strength " +
                             shape_str(strength.value().shape()) + " incompatible with " + shape_str(xv.shape()));
    }
    const Tensor& sv = strength.value();
    Tensor y(xv.shape());
    for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t i = 0; i < n; ++i) y[ch * n + i] = xv[ch * n + i] + sv[ch] * noise[i];
    const std::size_t xi = x.id, si = strength.id;
    return tape.record(std::move(y), {xi, si}, [=, noise = noise](Tape& t, std::size_t self) {
        const Tensor& g = t.grad_buffer(self);
        if (t.requires_grad(xi)) {
            Tensor& gx = t.grad_buffer(xi);
            for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
        }
        if (t.requires_grad(si)) {
            Tensor& gs = t.grad_buffer(si);
            for (std::size_t ch = 0; ch < c; ++ch) {
                double acc = 0.0;
                for (std::size_t i = 0; i < n; ++i) acc += g[ch * n + i] * noise[i];
                gs[ch] += acc;
            }
        }
    });
}

Var linear(Var weight, Var x, Var bias) {
    Tape& tape = tape_of(weight, x);
    tape_of(weight, bias);
    const Tensor& w = weight.value();
    const Tensor& xv = x.value();
    const Tensor& b = bias.value();
    if (w.rank() != 2 || xv.rank() != 1 || b.rank() != 1 || w.dim(1) != xv.dim(0) || b.dim(0) != w.dim(0)) {
        throw DimensionError("linear: weight " + shape_str(w.shape()) + ", input " + shape_str(xv.shape()) +
                             ", bias " + shape_str(b.shape()) + " are inconsistent");
    }
    const std::size_t out = w.dim(0), in = w.dim(1);
    Tensor y({out});
    for (std::size_t o = 0; o < out; ++o) {
        double acc = b[o];
        for (std::size_t i = 0; i < in; ++i) acc += w[o * in + i] * xv[i];
        y[o] = acc;
    }
    const std::size_t wi = weight.id, xi = x.id, bi = bias.id;
    return tape.record(std::move(y), {wi, xi, bi}, [=](Tape& t, std::size_t self) {
        const Tensor& g = t.grad_buffer(self);
        const Tensor& wv = t.value(wi);
        if (t.requires_grad(xi)) {
            Tensor& gx = t.grad_buffer(xi);
            for (std::size_t o = 0; o < out; ++o)
                for (std::size_t i = 0; i < in; ++i) gx[i] += wv[o * in + i] * g[o];
        }
        if (t.requires_grad(wi)) {
            const Tensor& xval = t.value(xi);
            Tensor& gw = t.grad_buffer(wi);
            for (std::size_t o = 0; o < out; ++o)
                for (std::size_t i = 0; i < in; ++i) gw[o * in + i] += g[o] * xval[i];
        }
        if (t.requires_grad(bi)) {
            Tensor& gb = t.grad_buffer(bi);
            for (std::size_t o = 0; o < out; ++o) gb[o] += g[o];
        }
    });
}

Var row(Var matrix, std::size_t i) {
    const Tensor& m = matrix.value();
    require_rank(m, 2, "row");
    if (i >= m.dim(0)) throw DimensionError("row: index " + std::to_string(i) + " outside " + shape_str(m.shape()));
    const std::size_t d = m.dim(1);
    Tensor y({d});
    std::copy_n(m.data().begin() + static_cast<std::ptrdiff_t>(i * d), d, y.data().begin());
    const std::size_t mi = matrix.id;
    return matrix.tape->record(std::move(y), {mi}, [=](Tape& t, std::size_t self) {
        const Tensor& g = t.grad_buffer(self);
        Tensor& gm = t.grad_buffer(mi);
        for (std::size_t j = 0; j < d; ++j) gm[i * d + j] += g[j];
    });
}

Var slice(Var v, std::size_t begin, std::size_t count) {
    const Tensor& x = v.value();
    require_rank(x, 1, "slice");
    if (count == 0 || begin + count > x.size()) {
        throw DimensionError("slice: range [" + std::to_string(begin) + "," + std::to_string(begin + count) +
                             ") outside " + shape_str(x.shape()));
    }
    Tensor y({count});
    std::copy_n(x.data().begin() + static_cast<std::ptrdiff_t>(begin), count, y.data().begin());
    const std::size_t vi = v.id;
    return v.tape->record(std::move(y), {vi}, [=](Tape& t, std::size_t self) {
        const Tensor& g = t.grad_buffer(self);
        Tensor& gv = t.grad_buffer(vi);
        for (std::size_t j = 0; j < count; ++j) gv[begin + j] += g[j];
    });
}

Var sigmoid(Var x) {
    const Tensor& xv = x.value();
    Tensor y(xv.shape());
    for (std::size_t i = 0; i < xv.size(); ++i) y[i] = 1.0 / (1.0 + std::exp(-xv[i]));
    const std::size_t xi = x.id;
    return x.tape->record(std::move(y), {xi}, [=](Tape& t, std::size_t self) {
        const Tensor& g = t.grad_buffer(self);
        const Tensor& yv = t.value(self);
        Tensor& gx = t.grad_buffer(xi);
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * yv[i] * (1.0 - yv[i]);
    });
}

Var add(Var a, Var b) {
    Tape& tape = tape_of(a, b);
    require_same_shape(a.value(), b.value(), "add");
    Tensor y = a.value();
    const Tensor& bv = b.value();
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += bv[i];
    const std::size_t ai = a.id, bi = b.id;
    return tape.record(std::move(y), {ai, bi}, [=](Tape& t, std::size_t self) {
        const Tensor& g = t.grad_buffer(self);
        for (std::size_t in : {ai, bi}) {
            if (!t.requires_grad(in)) continue;
            Tensor& gi = t.grad_buffer(in);
            for (std::size_t i = 0; i < g.size(); ++i) gi[i] += g[i];
        }
    });
}

Var scale(Var x, double factor) {
    Tensor y = x.value();
    for (auto& v : y.data()) v *= factor;
    const std::size_t xi = x.id;
    return x.tape->record(std::move(y), {xi}, [=](Tape& t, std::size_t self) {
        const Tensor& g = t.grad_buffer(self);
        Tensor& gx = t.grad_buffer(xi);
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += factor * g[i];
    });
}

Var sum(Var x) {
    const Tensor& xv = x.value();
    const double s = std::accumulate(xv.data().begin(), xv.data().end(), 0.0);
    const std::size_t xi = x.id;
    return x.tape->record(Tensor({1}, {s}), {xi}, [=](Tape& t, std::size_t self) {
        const double g = t.grad_buffer(self)[0];
        Tensor& gx = t.grad_buffer(xi);
        for (auto& v : gx.data()) v += g;
    });
}

Var sum_squares(Var x) {
    const Tensor& xv = x.value();
    double s = 0.0;
    for (double v : xv.data()) s += v * v;
    const std::size_t xi = x.id;
    return x.tape->record(Tensor({1}, {s}), {xi}, [=](Tape& t, std::size_t self) {
        const double g = t.grad_buffer(self)[0];
        const Tensor& in = t.value(xi);
        Tensor& gx = t.grad_buffer(xi);
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += 2.0 * in[i] * g;
    });
}

namespace {

// Shared body of the two mean-reduced elementwise losses. `deriv` maps a
// difference a-b to d(loss term)/da.
template <typename Term, typename Deriv>
Var mean_reduced(Var a, Var b, const char* what, Term term, Deriv deriv) {
    Tape& tape = tape_of(a, b);
    require_same_shape(a.value(), b.value(), what);
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    const double n = static_cast<double>(av.size());
    double s = 0.0;
    for (std::size_t i = 0; i < av.size(); ++i) s += term(av[i] - bv[i]);
    const std::size_t ai = a.id, bi = b.id;
    return tape.record(Tensor({1}, {s / n}), {ai, bi}, [=](Tape& t, std::size_t self) {
        const double g = t.grad_buffer(self)[0] / n;
        const Tensor& x = t.value(ai);
        const Tensor& y = t.value(bi);
        const bool need_a = t.requires_grad(ai), need_b = t.requires_grad(bi);
        for (std::size_t i = 0; i < x.size(); ++i) {
            const double d = g * deriv(x[i] - y[i]);
            if (need_a) t.grad_buffer(ai)[i] += d;
            if (need_b) t.grad_buffer(bi)[i] -= d;
        }
    });
}

}  // namespace

Var mean_abs_diff(Var a, Var b) {
    return mean_reduced(
        a, b, "mean_abs_diff", [](double d) { return std::abs(d); },
        [](double d) { return d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0); });
}

Var mean_sq_diff(Var a, Var b) {
    return mean_reduced(
        a, b, "mean_sq_diff", [](double d) { return d * d; }, [](double d) { return 2.0 * d; });
}

GradCheckResult grad_check(const ScalarFn& f, const Tensor& x, double h, std::size_t max_coords,
                           std::uint64_t seed) {
    if (!(h > 0.0)) throw ContractError("grad_check: step h must be positive");
    GradCheckResult result;
    {
        Tape tape;
        Var p = tape.parameter(x);
        Var out = f(p);
        if (out.tape != &tape || out.value().size() != 1) {
            throw ContractError("grad_check: function must return a scalar on the given tape");
        }
        tape.backward(out);
        result.analytic = tape.grad(p);
    }

    std::vector<std::size_t> coords(x.size());
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (coords.size() > max_coords) {
        Rng rng(seed);
        for (std::size_t i = 0; i < max_coords; ++i) {
            const std::size_t j = i + static_cast<std::size_t>(rng.next_u64() % (coords.size() - i));
            std::swap(coords[i], coords[j]);
        }
        coords.resize(max_coords);
        std::sort(coords.begin(), coords.end());
    }

    auto eval = [&](const Tensor& at) {
        Tape tape;
        return f(tape.constant(at)).value()[0];
    };
    double max_err = 0.0, scale_a = 0.0, scale_n = 0.0;
    for (std::size_t c : coords) {
        Tensor plus = x, minus = x;
        plus[c] += h;
        minus[c] -= h;
        const double num = (eval(plus) - eval(minus)) / (2.0 * h);
        result.numeric.push_back(num);
        max_err = std::max(max_err, std::abs(num - result.analytic[c]));
        scale_a = std::max(scale_a, std::abs(result.analytic[c]));
        scale_n = std::max(scale_n, std::abs(num));
    }
    const double denom = std::max(scale_a, scale_n);
    result.max_rel_error = denom > 0.0 ? max_err / denom : 0.0;
    result.coords = std::move(coords);
    return result;
}

}  // namespace sf
