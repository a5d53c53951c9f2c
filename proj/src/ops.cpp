// Copyright 2026 the l2tww authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "l2tww/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>

#include "l2tww/kernels.hpp"

namespace l2tww {
namespace {

Graph& same_graph(const Var& a, const Var& b) {
    if (!a.valid() || !b.valid() || a.g != b.g)
        throw std::runtime_error("ops: operands from different graphs");
    return *a.g;
}

void require_same_shape(const char* op, const Var& a, const Var& b) {
    if (!(a.val().shape() == b.val().shape()))
        throw std::runtime_error(std::string("ops: ") + op + " shape mismatch " +
                                 a.val().shape_str() + " vs " + b.val().shape_str());
}

size_t n_of(const Var& a) { return static_cast<size_t>(a.val().numel()); }

// Interpolation stencil along one axis under the align-corners convention.
struct Stencil {
    std::vector<int> lo, hi;
    std::vector<double> frac;
};

Stencil make_stencil(int in, int out) {
    Stencil s;
    s.lo.resize(static_cast<size_t>(out));
    s.hi.resize(static_cast<size_t>(out));
    s.frac.resize(static_cast<size_t>(out));
    double step = out > 1 ? static_cast<double>(in - 1) / (out - 1) : 0.0;
    for (int o = 0; o < out; ++o) {
        double f = o * step;
        int l = static_cast<int>(f);
        if (l > in - 1) l = in - 1;
        int h = std::min(l + 1, in - 1);
        s.lo[static_cast<size_t>(o)] = l;
        s.hi[static_cast<size_t>(o)] = h;
        s.frac[static_cast<size_t>(o)] = f - l;
    }
    return s;
}

Var bilinear_adjoint(const Var& gout, int in_h, int in_w);

}  // namespace

Var add(const Var& a, const Var& b) {
    Graph& g = same_graph(a, b);
    require_same_shape("add", a, b);
    Tensor out(a.val().shape());
    kernels().add(out.mut(), a.val().data(), b.val().data(), n_of(a));
    return g.record("add", std::move(out), {a.id, b.id}, [a, b](const Var& go, const Var&) {
        return std::vector<Var>{a.requires_grad() ? go : Var{},
                                b.requires_grad() ? go : Var{}};
    });
}

Var sub(const Var& a, const Var& b) {
    Graph& g = same_graph(a, b);
    require_same_shape("sub", a, b);
    Tensor out(a.val().shape());
    kernels().sub(out.mut(), a.val().data(), b.val().data(), n_of(a));
    return g.record("sub", std::move(out), {a.id, b.id}, [a, b](const Var& go, const Var&) {
        return std::vector<Var>{a.requires_grad() ? go : Var{},
                                b.requires_grad() ? neg(go) : Var{}};
    });
}

Var mul(const Var& a, const Var& b) {
    Graph& g = same_graph(a, b);
    require_same_shape("mul", a, b);
    Tensor out(a.val().shape());
    kernels().mul(out.mut(), a.val().data(), b.val().data(), n_of(a));
    return g.record("mul", std::move(out), {a.id, b.id}, [a, b](const Var& go, const Var&) {
        return std::vector<Var>{a.requires_grad() ? mul(go, b) : Var{},
                                b.requires_grad() ? mul(go, a) : Var{}};
    });
}

Var scale(const Var& a, double c) {
    Tensor out(a.val().shape());
    kernels().scale(out.mut(), a.val().data(), c, n_of(a));
    return a.g->record("scale", std::move(out), {a.id}, [a, c](const Var& go, const Var&) {
        return std::vector<Var>{a.requires_grad() ? scale(go, c) : Var{}};
    });
}

Var neg(const Var& a) { return scale(a, -1.0); }

Var vexp(const Var& a) {
    Tensor out(a.val().shape());
    const double* src = a.val().data();
    double* dst = out.mut();
    for (size_t i = 0; i < n_of(a); ++i) dst[i] = std::exp(src[i]);
    // d(exp x) = exp x, i.e. the output node itself
    return a.g->record("exp", std::move(out), {a.id}, [a](const Var& go, const Var& self) {
        return std::vector<Var>{a.requires_grad() ? mul(go, self) : Var{}};
    });
}

Var relu(const Var& a) {
    Tensor out(a.val().shape());
    kernels().relu(out.mut(), a.val().data(), n_of(a));
    Tensor mask(a.val().shape());
    kernels().relu_mask(mask.mut(), a.val().data(), n_of(a));
    return a.g->record("relu", std::move(out), {a.id}, [a, mask](const Var& go, const Var&) {
        return std::vector<Var>{a.requires_grad() ? mul(go, go.g->constant(mask)) : Var{}};
    });
}

Var relu6(const Var& a) {
    Tensor out(a.val().shape());
    kernels().relu6(out.mut(), a.val().data(), n_of(a));
    Tensor mask(a.val().shape());
    kernels().relu6_mask(mask.mut(), a.val().data(), n_of(a));
    return a.g->record("relu6", std::move(out), {a.id}, [a, mask](const Var& go, const Var&) {
        return std::vector<Var>{a.requires_grad() ? mul(go, go.g->constant(mask)) : Var{}};
    });
}

Var matmul(const Var& a, const Var& b) {
    Graph& g = same_graph(a, b);
    const Tensor& ta = a.val();
    const Tensor& tb = b.val();
    if (ta.rank() != 2 || tb.rank() != 2 || ta.dim(1) != tb.dim(0))
        throw std::runtime_error("ops: matmul shape mismatch " + ta.shape_str() + " vs " + tb.shape_str());
    const int m = ta.dim(0), k = ta.dim(1), n = tb.dim(1);
    Tensor out({m, n});
    kernels().matmul(out.mut(), ta.data(), tb.data(),
                     static_cast<size_t>(m), static_cast<size_t>(k), static_cast<size_t>(n));
    return g.record("matmul", std::move(out), {a.id, b.id}, [a, b](const Var& go, const Var&) {
        Var ga = a.requires_grad() ? matmul(go, transpose(b)) : Var{};
        Var gb = b.requires_grad() ? matmul(transpose(a), go) : Var{};
        return std::vector<Var>{ga, gb};
    });
}

Var transpose(const Var& a) {
    const Tensor& t = a.val();
    if (t.rank() != 2) throw std::runtime_error("ops: transpose needs rank 2, got " + t.shape_str());
    const int m = t.dim(0), n = t.dim(1);
    Tensor out({n, m});
    const double* src = t.data();
    double* dst = out.mut();
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) dst[j * m + i] = src[i * n + j];
    return a.g->record("transpose", std::move(out), {a.id}, [a](const Var& go, const Var&) {
        return std::vector<Var>{a.requires_grad() ? transpose(go) : Var{}};
    });
}

Var transpose01(const Var& a) {
    const Tensor& t = a.val();
    if (t.rank() != 3) throw std::runtime_error("ops: transpose01 needs rank 3, got " + t.shape_str());
    const int d0 = t.dim(0), d1 = t.dim(1), d2 = t.dim(2);
    Tensor out({d1, d0, d2});
    const double* src = t.data();
    double* dst = out.mut();
    for (int i = 0; i < d0; ++i)
        for (int j = 0; j < d1; ++j)
            std::memcpy(dst + (static_cast<size_t>(j) * d0 + i) * d2,
                        src + (static_cast<size_t>(i) * d1 + j) * d2,
                        static_cast<size_t>(d2) * sizeof(double));
    return a.g->record("transpose01", std::move(out), {a.id}, [a](const Var& go, const Var&) {
        return std::vector<Var>{a.requires_grad() ? transpose01(go) : Var{}};
    });
}

Var reshape(const Var& a, std::vector<int> shape) {
    Tensor out = a.val().reshaped(std::move(shape));
    std::vector<int> old = a.val().shape();
    return a.g->record("reshape", std::move(out), {a.id}, [a, old](const Var& go, const Var&) {
        return std::vector<Var>{a.requires_grad() ? reshape(go, old) : Var{}};
    });
}

Var sum_last(const Var& a) {
    const Tensor& t = a.val();
    if (t.rank() < 2) throw std::runtime_error("ops: sum_last needs rank >= 2, got " + t.shape_str());
    std::vector<int> oshape(t.shape().begin(), t.shape().end() - 1);
    const int l = t.shape().back();
    Tensor out(oshape);
    const double* src = t.data();
    double* dst = out.mut();
    const int64_t rows = out.numel();
    for (int64_t r = 0; r < rows; ++r) {
        double s = 0.0;
        const double* row = src + r * l;
        for (int i = 0; i < l; ++i) s += row[i];
        dst[r] = s;
    }
    return a.g->record("sum_last", std::move(out), {a.id}, [a, l](const Var& go, const Var&) {
        return std::vector<Var>{a.requires_grad() ? broadcast_last(go, l) : Var{}};
    });
}

Var broadcast_last(const Var& a, int l) {
    if (l <= 0) throw std::runtime_error("ops: broadcast_last needs positive length");
    const Tensor& t = a.val();
    std::vector<int> oshape = t.shape();
    oshape.push_back(l);
    Tensor out(oshape);
    const double* src = t.data();
    double* dst = out.mut();
    for (int64_t r = 0; r < t.numel(); ++r)
        for (int i = 0; i < l; ++i) dst[r * l + i] = src[r];
    return a.g->record("broadcast_last", std::move(out), {a.id}, [a](const Var& go, const Var&) {
        return std::vector<Var>{a.requires_grad() ? sum_last(go) : Var{}};
    });
}

Var sum_first(const Var& a) {
    const Tensor& t = a.val();
    if (t.rank() < 2) throw std::runtime_error("ops: sum_first needs rank >= 2, got " + t.shape_str());
    std::vector<int> oshape(t.shape().begin() + 1, t.shape().end());
    const int b = t.dim(0);
    Tensor out(oshape);
    const int64_t block = out.numel();
    const double* src = t.data();
    double* dst = out.mut();
    std::memcpy(dst, src, static_cast<size_t>(block) * sizeof(double));
    for (int i = 1; i < b; ++i)
        kernels().axpy(dst, 1.0, src + i * block, static_cast<size_t>(block));
    return a.g->record("sum_first", std::move(out), {a.id}, [a, b](const Var& go, const Var&) {
        return std::vector<Var>{a.requires_grad() ? broadcast_first(go, b) : Var{}};
    });
}

Var broadcast_first(const Var& a, int b) {
    if (b <= 0) throw std::runtime_error("ops: broadcast_first needs positive count");
    const Tensor& t = a.val();
    std::vector<int> oshape;
    oshape.push_back(b);
    oshape.insert(oshape.end(), t.shape().begin(), t.shape().end());
    Tensor out(oshape);
    const int64_t block = t.numel();
    double* dst = out.mut();
    for (int i = 0; i < b; ++i)
        std::memcpy(dst + i * block, t.data(), static_cast<size_t>(block) * sizeof(double));
    return a.g->record("broadcast_first", std::move(out), {a.id}, [a](const Var& go, const Var&) {
        return std::vector<Var>{a.requires_grad() ? sum_first(go) : Var{}};
    });
}

Var sum_all(const Var& a) {
    const Tensor& t = a.val();
    double s = 0.0;
    const double* src = t.data();
    for (int64_t i = 0; i < t.numel(); ++i) s += src[i];
    std::vector<int> oshape = t.shape();
    return a.g->record("sum_all", Tensor::scalar(s), {a.id}, [a, oshape](const Var& go, const Var&) {
        return std::vector<Var>{a.requires_grad() ? broadcast_fill(go, oshape) : Var{}};
    });
}

Var broadcast_fill(const Var& s, std::vector<int> shape) {
    if (s.val().numel() != 1)
        throw std::runtime_error("ops: broadcast_fill needs a scalar, got " + s.val().shape_str());
    Tensor out = Tensor::full(shape, s.val().item());
    return s.g->record("broadcast_fill", std::move(out), {s.id}, [s](const Var& go, const Var&) {
        return std::vector<Var>{s.requires_grad() ? sum_all(go) : Var{}};
    });
}

Var dot(const Var& a, const Var& b) {
    require_same_shape("dot", a, b);
    return sum_all(mul(a, b));
}

namespace {

struct ConvGeom {
    int b, c, h, w, kh, kw, stride, pad, oh, ow;
};

ConvGeom conv_geom(const std::vector<int>& xshape, int kh, int kw, int stride, int padding) {
    if (xshape.size() != 4)
        throw std::runtime_error("ops: im2col needs [B,C,H,W], got " + shape_to_string(xshape));
    if (stride < 1 || padding < 0 || kh < 1 || kw < 1)
        throw std::runtime_error("ops: bad convolution geometry");
    ConvGeom g{xshape[0], xshape[1], xshape[2], xshape[3], kh, kw, stride, padding, 0, 0};
    const int eh = g.h + 2 * padding - kh;
    const int ew = g.w + 2 * padding - kw;
    if (eh < 0 || ew < 0 || eh % stride != 0 || ew % stride != 0)
        throw std::runtime_error("ops: non-integral convolution output for input " + shape_to_string(xshape) +
                                 ", kernel " + std::to_string(kh) + "x" + std::to_string(kw) +
                                 ", stride " + std::to_string(stride) + ", padding " + std::to_string(padding));
    g.oh = eh / stride + 1;
    g.ow = ew / stride + 1;
    return g;
}

}  // namespace

Var im2col(const Var& x, int kh, int kw, int stride, int padding) {
    const ConvGeom cg = conv_geom(x.val().shape(), kh, kw, stride, padding);
    const int rows = cg.c * kh * kw;
    const int cols = cg.b * cg.oh * cg.ow;
    Tensor out({rows, cols});
    const double* src = x.val().data();
    double* dst = out.mut();
    for (int c = 0; c < cg.c; ++c)
        for (int ki = 0; ki < kh; ++ki)
            for (int kj = 0; kj < kw; ++kj) {
                double* drow = dst + (static_cast<size_t>(c) * kh + ki) * kw * cols + static_cast<size_t>(kj) * cols;
                for (int b = 0; b < cg.b; ++b) {
                    const double* plane = src + (static_cast<size_t>(b) * cg.c + c) * cg.h * cg.w;
                    for (int oh = 0; oh < cg.oh; ++oh) {
                        const int iy = oh * stride + ki - padding;
                        double* dcol = drow + (static_cast<size_t>(b) * cg.oh + oh) * cg.ow;
                        if (iy < 0 || iy >= cg.h) {
                            std::memset(dcol, 0, static_cast<size_t>(cg.ow) * sizeof(double));
                            continue;
                        }
                        for (int ow = 0; ow < cg.ow; ++ow) {
                            const int ix = ow * stride + kj - padding;
                            dcol[ow] = (ix >= 0 && ix < cg.w) ? plane[iy * cg.w + ix] : 0.0;
                        }
                    }
                }
            }
    std::vector<int> xshape = x.val().shape();
    return x.g->record("im2col", std::move(out), {x.id},
                       [x, xshape, kh, kw, stride, padding](const Var& go, const Var&) {
                           return std::vector<Var>{
                               x.requires_grad() ? col2im(go, xshape, kh, kw, stride, padding) : Var{}};
                       });
}

Var col2im(const Var& cols, std::vector<int> xshape, int kh, int kw, int stride, int padding) {
    const ConvGeom cg = conv_geom(xshape, kh, kw, stride, padding);
    const int rows = cg.c * kh * kw;
    const int ncols = cg.b * cg.oh * cg.ow;
    if (cols.val().rank() != 2 || cols.val().dim(0) != rows || cols.val().dim(1) != ncols)
        throw std::runtime_error("ops: col2im got " + cols.val().shape_str() + ", expected [" +
                                 std::to_string(rows) + "x" + std::to_string(ncols) + "]");
    Tensor out(xshape);
    const double* src = cols.val().data();
    double* dst = out.mut();
    for (int c = 0; c < cg.c; ++c)
        for (int ki = 0; ki < kh; ++ki)
            for (int kj = 0; kj < kw; ++kj) {
                const double* srow = src + (static_cast<size_t>(c) * kh + ki) * kw * ncols + static_cast<size_t>(kj) * ncols;
                for (int b = 0; b < cg.b; ++b) {
                    double* plane = dst + (static_cast<size_t>(b) * cg.c + c) * cg.h * cg.w;
                    for (int oh = 0; oh < cg.oh; ++oh) {
                        const int iy = oh * stride + ki - padding;
                        if (iy < 0 || iy >= cg.h) continue;
                        const double* scol = srow + (static_cast<size_t>(b) * cg.oh + oh) * cg.ow;
                        for (int ow = 0; ow < cg.ow; ++ow) {
                            const int ix = ow * stride + kj - padding;
                            if (ix >= 0 && ix < cg.w) plane[iy * cg.w + ix] += scol[ow];
                        }
                    }
                }
            }
    return cols.g->record("col2im", std::move(out), {cols.id},
                          [cols, kh, kw, stride, padding](const Var& go, const Var&) {
                              return std::vector<Var>{
                                  cols.requires_grad() ? im2col(go, kh, kw, stride, padding) : Var{}};
                          });
}

Var bilinear_resize(const Var& x, int out_h, int out_w) {
    const Tensor& t = x.val();
    if (t.rank() != 4) throw std::runtime_error("ops: bilinear_resize needs [B,C,H,W], got " + t.shape_str());
    if (out_h < 1 || out_w < 1) throw std::runtime_error("ops: bilinear_resize needs positive output size");
    const int b = t.dim(0), c = t.dim(1), h = t.dim(2), w = t.dim(3);
    const Stencil sy = make_stencil(h, out_h);
    const Stencil sx = make_stencil(w, out_w);
    Tensor out({b, c, out_h, out_w});
    const double* src = t.data();
    double* dst = out.mut();
    for (int p = 0; p < b * c; ++p) {
        const double* plane = src + static_cast<size_t>(p) * h * w;
        double* oplane = dst + static_cast<size_t>(p) * out_h * out_w;
        for (int oy = 0; oy < out_h; ++oy) {
            const int y0 = sy.lo[static_cast<size_t>(oy)], y1 = sy.hi[static_cast<size_t>(oy)];
            const double wy = sy.frac[static_cast<size_t>(oy)];
            for (int ox = 0; ox < out_w; ++ox) {
                const int x0 = sx.lo[static_cast<size_t>(ox)], x1 = sx.hi[static_cast<size_t>(ox)];
                const double wx = sx.frac[static_cast<size_t>(ox)];
                oplane[oy * out_w + ox] =
                    (1.0 - wy) * (1.0 - wx) * plane[y0 * w + x0] +
                    (1.0 - wy) * wx * plane[y0 * w + x1] +
                    wy * (1.0 - wx) * plane[y1 * w + x0] +
                    wy * wx * plane[y1 * w + x1];
            }
        }
    }
    return x.g->record("bilinear_resize", std::move(out), {x.id}, [x, h, w](const Var& go, const Var&) {
        return std::vector<Var>{x.requires_grad() ? bilinear_adjoint(go, h, w) : Var{}};
    });
}

namespace {

// Transpose of bilinear_resize as a linear map: scatter with the same stencil.
Var bilinear_adjoint(const Var& gout, int in_h, int in_w) {
    const Tensor& t = gout.val();
    const int b = t.dim(0), c = t.dim(1), oh = t.dim(2), ow = t.dim(3);
    const Stencil sy = make_stencil(in_h, oh);
    const Stencil sx = make_stencil(in_w, ow);
    Tensor out({b, c, in_h, in_w});
    const double* src = t.data();
    double* dst = out.mut();
    for (int p = 0; p < b * c; ++p) {
        const double* gplane = src + static_cast<size_t>(p) * oh * ow;
        double* plane = dst + static_cast<size_t>(p) * in_h * in_w;
        for (int oy = 0; oy < oh; ++oy) {
            const int y0 = sy.lo[static_cast<size_t>(oy)], y1 = sy.hi[static_cast<size_t>(oy)];
            const double wy = sy.frac[static_cast<size_t>(oy)];
            for (int ox = 0; ox < ow; ++ox) {
                const int x0 = sx.lo[static_cast<size_t>(ox)], x1 = sx.hi[static_cast<size_t>(ox)];
                const double wx = sx.frac[static_cast<size_t>(ox)];
                const double gv = gplane[oy * ow + ox];
                plane[y0 * in_w + x0] += (1.0 - wy) * (1.0 - wx) * gv;
                plane[y0 * in_w + x1] += (1.0 - wy) * wx * gv;
                plane[y1 * in_w + x0] += wy * (1.0 - wx) * gv;
                plane[y1 * in_w + x1] += wy * wx * gv;
            }
        }
    }
    return gout.g->record("bilinear_adjoint", std::move(out), {gout.id}, [gout, oh, ow](const Var& go, const Var&) {
        return std::vector<Var>{gout.requires_grad() ? bilinear_resize(go, oh, ow) : Var{}};
    });
}

}  // namespace

Var gather_rows(const Var& a, std::vector<int64_t> idx) {
    const Tensor& t = a.val();
    if (t.rank() != 2) throw std::runtime_error("ops: gather_rows needs [B,K], got " + t.shape_str());
    const int b = t.dim(0), k = t.dim(1);
    if (static_cast<int>(idx.size()) != b)
        throw std::runtime_error("ops: gather_rows got " + std::to_string(idx.size()) + " indices for batch " + std::to_string(b));
    Tensor out({b});
    const double* src = t.data();
    double* dst = out.mut();
    for (int i = 0; i < b; ++i) {
        const int64_t j = idx[static_cast<size_t>(i)];
        if (j < 0 || j >= k)
            throw std::runtime_error("ops: gather_rows index " + std::to_string(j) + " out of range [0," + std::to_string(k) + ")");
        dst[i] = src[static_cast<size_t>(i) * k + j];
    }
    return a.g->record("gather_rows", std::move(out), {a.id}, [a, idx, k](const Var& go, const Var&) {
        return std::vector<Var>{a.requires_grad() ? scatter_rows(go, idx, k) : Var{}};
    });
}

Var scatter_rows(const Var& v, std::vector<int64_t> idx, int k) {
    const Tensor& t = v.val();
    if (t.rank() != 1) throw std::runtime_error("ops: scatter_rows needs [B], got " + t.shape_str());
    const int b = t.dim(0);
    if (static_cast<int>(idx.size()) != b)
        throw std::runtime_error("ops: scatter_rows index count mismatch");
    Tensor out({b, k});
    const double* src = t.data();
    double* dst = out.mut();
    for (int i = 0; i < b; ++i) {
        const int64_t j = idx[static_cast<size_t>(i)];
        if (j < 0 || j >= k) throw std::runtime_error("ops: scatter_rows index out of range");
        dst[static_cast<size_t>(i) * k + j] = src[i];
    }
    return v.g->record("scatter_rows", std::move(out), {v.id}, [v, idx](const Var& go, const Var&) {
        return std::vector<Var>{v.requires_grad() ? gather_rows(go, idx) : Var{}};
    });
}

Var softmax_rows(const Var& a) {
    const Tensor& t = a.val();
    if (t.rank() != 2) throw std::runtime_error("ops: softmax_rows needs [B,C], got " + t.shape_str());
    const int b = t.dim(0), c = t.dim(1);
    Tensor out({b, c});
    const double* src = t.data();
    double* dst = out.mut();
    for (int i = 0; i < b; ++i) {
        const double* row = src + static_cast<size_t>(i) * c;
        double* orow = dst + static_cast<size_t>(i) * c;
        double m = row[0];
        for (int j = 1; j < c; ++j) m = std::max(m, row[j]);
        double s = 0.0;
        for (int j = 0; j < c; ++j) {
            orow[j] = std::exp(row[j] - m);
            s += orow[j];
        }
        for (int j = 0; j < c; ++j) orow[j] /= s;
    }
    // gx = s . (go - <go, s> 1), expressed through the output node
    return a.g->record("softmax_rows", std::move(out), {a.id}, [a, c](const Var& go, const Var& self) {
        if (!a.requires_grad()) return std::vector<Var>{Var{}};
        Var inner = sum_last(mul(go, self));                       // [B]
        Var gx = mul(self, sub(go, broadcast_last(inner, c)));     // [B,C]
        return std::vector<Var>{gx};
    });
}

Var log_softmax_rows(const Var& a) {
    const Tensor& t = a.val();
    if (t.rank() != 2) throw std::runtime_error("ops: log_softmax_rows needs [B,C], got " + t.shape_str());
    const int b = t.dim(0), c = t.dim(1);
    Tensor out({b, c});
    const double* src = t.data();
    double* dst = out.mut();
    for (int i = 0; i < b; ++i) {
        const double* row = src + static_cast<size_t>(i) * c;
        double* orow = dst + static_cast<size_t>(i) * c;
        double m = row[0];
        for (int j = 1; j < c; ++j) m = std::max(m, row[j]);
        double s = 0.0;
        for (int j = 0; j < c; ++j) s += std::exp(row[j] - m);
        const double lse = m + std::log(s);
        for (int j = 0; j < c; ++j) orow[j] = row[j] - lse;
    }
    // gx = go - softmax(x) * rowsum(go), with softmax recovered as exp(out)
    return a.g->record("log_softmax_rows", std::move(out), {a.id}, [a, c](const Var& go, const Var& self) {
        if (!a.requires_grad()) return std::vector<Var>{Var{}};
        Var rowsum = sum_last(go);                                           // [B]
        Var gx = sub(go, mul(vexp(self), broadcast_last(rowsum, c)));        // [B,C]
        return std::vector<Var>{gx};
    });
}

Var conv2d(const Var& x, const Var& k, int stride, int padding) {
    return conv2d(x, k, Var{}, stride, padding);
}

Var conv2d(const Var& x, const Var& k, const Var& bias, int stride, int padding) {
    const Tensor& tx = x.val();
    const Tensor& tk = k.val();
    if (tx.rank() != 4 || tk.rank() != 4)
        throw std::runtime_error("ops: conv2d needs x [B,C,H,W] and kernel [Co,Ci,kh,kw], got " +
                                 tx.shape_str() + " and " + tk.shape_str());
    if (tk.dim(1) != tx.dim(1))
        throw std::runtime_error("ops: conv2d channel mismatch, input " + tx.shape_str() +
                                 " vs kernel " + tk.shape_str());
    const int cout = tk.dim(0), kh = tk.dim(2), kw = tk.dim(3);
    const ConvGeom cg = conv_geom(tx.shape(), kh, kw, stride, padding);
    const int l = cg.oh * cg.ow;

    Var cols = im2col(x, kh, kw, stride, padding);                    // [Ci*kh*kw, B*L]
    Var kmat = reshape(k, {cout, tk.dim(1) * kh * kw});
    Var prod = matmul(kmat, cols);                                    // [Co, B*L]
    Var arranged = transpose01(reshape(prod, {cout, cg.b, l}));       // [B, Co, L]
    if (bias.valid()) {
        if (bias.val().rank() != 1 || bias.val().dim(0) != cout)
            throw std::runtime_error("ops: conv2d bias " + bias.val().shape_str() +
                                     " does not match output channels " + std::to_string(cout));
        arranged = add(arranged, broadcast_first(broadcast_last(bias, l), cg.b));
    }
    return reshape(arranged, {cg.b, cout, cg.oh, cg.ow});
}

Var global_avg_pool(const Var& x) {
    const Tensor& t = x.val();
    if (t.rank() != 4) throw std::runtime_error("ops: global_avg_pool needs [B,C,H,W], got " + t.shape_str());
    const int hw = t.dim(2) * t.dim(3);
    Var flat = reshape(x, {t.dim(0), t.dim(1), hw});
    return scale(sum_last(flat), 1.0 / hw);
}

Var linear(const Var& x, const Var& w, const Var& b) {
    Var y = matmul(x, w);
    return add(y, broadcast_first(b, x.val().dim(0)));
}

Var softmax(const Var& a) {
    const Tensor& t = a.val();
    if (t.rank() == 2) return softmax_rows(a);
    if (t.rank() != 1) throw std::runtime_error("ops: softmax needs rank 1 or 2, got " + t.shape_str());
    const int c = t.dim(0);
    return reshape(softmax_rows(reshape(a, {1, c})), {c});
}

Var cross_entropy(const Var& logits, const std::vector<int64_t>& labels) {
    const Tensor& t = logits.val();
    if (t.rank() != 2) throw std::runtime_error("ops: cross_entropy needs [B,K] logits, got " + t.shape_str());
    const int b = t.dim(0), k = t.dim(1);
    if (static_cast<int>(labels.size()) != b)
        throw std::runtime_error("ops: cross_entropy got " + std::to_string(labels.size()) +
                                 " labels for batch " + std::to_string(b));
    for (size_t i = 0; i < labels.size(); ++i)
        if (labels[i] < 0 || labels[i] >= k)
            throw std::runtime_error("ops: label " + std::to_string(labels[i]) + " out of range [0," +
                                     std::to_string(k) + ") at batch index " + std::to_string(i));
    Var lsm = log_softmax_rows(logits);
    Var picked = gather_rows(lsm, labels);
    return scale(sum_all(picked), -1.0 / b);
}

}  // namespace l2tww
