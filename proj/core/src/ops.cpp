#include "hanmt/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <fmt/format.h>

namespace hanmt {
namespace {

bool is_suffix(const Shape& small, const Shape& big) {
    if (small.size() > big.size()) return false;
    return std::equal(small.rbegin(), small.rend(), big.rbegin());
}

void require_suffix(const char* op, const Shape& a, const Shape& b) {
    if (!is_suffix(b, a)) {
        throw DimensionError(fmt::format("{}: shapes {} and {} are not broadcast-compatible", op, shape_str(a),
                                         shape_str(b)));
    }
}

// Accumulates the gradient of a suffix-broadcast operand by folding over the
// repeated leading block.
void fold_into(Tensor& dst, const Tensor& full_grad, const std::function<double(std::size_t)>& factor) {
    const std::size_t n = dst.size();
    for (std::size_t i = 0; i < full_grad.size(); ++i) dst[i % n] += full_grad[i] * factor(i);
}

std::vector<std::size_t> strides_of(const Shape& shape) {
    std::vector<std::size_t> strides(shape.size(), 1);
    for (std::size_t i = shape.size(); i-- > 1;) strides[i - 1] = strides[i] * shape[i];
    return strides;
}

// C[m,n] += A[m,p] B[p,n]
void gemm_nn(std::size_t m, std::size_t n, std::size_t p, const double* __restrict a, const double* __restrict b,
             double* __restrict c) {
    for (std::size_t i = 0; i < m; ++i) {
        double* __restrict c_row = c + i * n;
        const double* a_row = a + i * p;
        for (std::size_t k = 0; k < p; ++k) {
            const double av = a_row[k];
            const double* __restrict b_row = b + k * n;
            for (std::size_t j = 0; j < n; ++j) c_row[j] += av * b_row[j];
        }
    }
}

// dA[m,p] += dC[m,n] B[p,n]^T, through an explicit transpose so the inner
// loop runs over contiguous memory
void gemm_nt(std::size_t m, std::size_t n, std::size_t p, const double* dc, const double* b, double* da,
             std::vector<double>& scratch) {
    scratch.resize(n * p);
    for (std::size_t k = 0; k < p; ++k) {
        for (std::size_t j = 0; j < n; ++j) scratch[j * p + k] = b[k * n + j];
    }
    gemm_nn(m, p, n, dc, scratch.data(), da);
}

// dB[p,n] += A[m,p]^T dC[m,n]
void gemm_tn(std::size_t m, std::size_t n, std::size_t p, const double* __restrict a, const double* __restrict dc,
             double* __restrict db) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* dc_row = dc + i * n;
        for (std::size_t k = 0; k < p; ++k) {
            const double av = a[i * p + k];
            if (av == 0.0) continue;
            double* __restrict db_row = db + k * n;
            for (std::size_t j = 0; j < n; ++j) db_row[j] += av * dc_row[j];
        }
    }
}

struct BatchPlan {
    Shape batch_shape;
    std::vector<std::size_t> a_offsets;  // in matrices
    std::vector<std::size_t> b_offsets;
};

BatchPlan plan_matmul_batches(const Shape& a_batch, const Shape& b_batch) {
    const std::size_t rank = std::max(a_batch.size(), b_batch.size());
    Shape a_full(rank, 1), b_full(rank, 1), out(rank, 1);
    std::copy(a_batch.begin(), a_batch.end(), a_full.begin() + static_cast<std::ptrdiff_t>(rank - a_batch.size()));
    std::copy(b_batch.begin(), b_batch.end(), b_full.begin() + static_cast<std::ptrdiff_t>(rank - b_batch.size()));
    for (std::size_t i = 0; i < rank; ++i) {
        if (a_full[i] != b_full[i] && a_full[i] != 1 && b_full[i] != 1) {
            throw DimensionError("matmul batch dimensions do not broadcast");
        }
        out[i] = std::max(a_full[i], b_full[i]);
    }
    const auto a_strides = strides_of(a_full);
    const auto b_strides = strides_of(b_full);
    const std::size_t count = shape_numel(out);
    BatchPlan plan{out, std::vector<std::size_t>(count), std::vector<std::size_t>(count)};
    std::vector<std::size_t> idx(rank, 0);
    for (std::size_t flat = 0; flat < count; ++flat) {
        std::size_t ao = 0, bo = 0;
        for (std::size_t d = 0; d < rank; ++d) {
            if (a_full[d] != 1) ao += idx[d] * a_strides[d];
            if (b_full[d] != 1) bo += idx[d] * b_strides[d];
        }
        plan.a_offsets[flat] = ao;
        plan.b_offsets[flat] = bo;
        for (std::size_t d = rank; d-- > 0;) {
            if (++idx[d] < out[d]) break;
            idx[d] = 0;
        }
    }
    return plan;
}

}  // namespace

Var add(const Var& a, const Var& b) {
    require_suffix("add", a.shape(), b.shape());
    Tensor out = a.value();
    const Tensor& bv = b.value();
    const std::size_t n = bv.size();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i % n];
    return Var::make(std::move(out), {a, b}, [](Node& self) {
        if (self.input_needs_grad(0)) {
            Tensor& ga = self.input_grad(0);
            for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += self.grad[i];
        }
        if (self.input_needs_grad(1)) fold_into(self.input_grad(1), self.grad, [](std::size_t) { return 1.0; });
    });
}

Var sub(const Var& a, const Var& b) {
    require_suffix("sub", a.shape(), b.shape());
    Tensor out = a.value();
    const Tensor& bv = b.value();
    const std::size_t n = bv.size();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i % n];
    return Var::make(std::move(out), {a, b}, [](Node& self) {
        if (self.input_needs_grad(0)) {
            Tensor& ga = self.input_grad(0);
            for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += self.grad[i];
        }
        if (self.input_needs_grad(1)) fold_into(self.input_grad(1), self.grad, [](std::size_t) { return -1.0; });
    });
}

Var mul(const Var& a, const Var& b) {
    require_suffix("mul", a.shape(), b.shape());
    Tensor out = a.value();
    const Tensor& bv = b.value();
    const std::size_t n = bv.size();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i % n];
    return Var::make(std::move(out), {a, b}, [](Node& self) {
        const Tensor& av = self.input_value(0);
        const Tensor& bv = self.input_value(1);
        const std::size_t n = bv.size();
        if (self.input_needs_grad(0)) {
            Tensor& ga = self.input_grad(0);
            for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += self.grad[i] * bv[i % n];
        }
        if (self.input_needs_grad(1)) fold_into(self.input_grad(1), self.grad, [&](std::size_t i) { return av[i]; });
    });
}

Var affine_scalar(const Var& x, double scale_by, double shift) {
    Tensor out = x.value();
    for (double& v : out.data()) v = scale_by * v + shift;
    return Var::make(std::move(out), {x}, [scale_by](Node& self) {
        Tensor& gx = self.input_grad(0);
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += scale_by * self.grad[i];
    });
}

Var matmul(const Var& a, const Var& b) {
    const Shape& as = a.shape();
    const Shape& bs = b.shape();
    if (as.size() < 2 || bs.size() < 2 || as[as.size() - 1] != bs[bs.size() - 2]) {
        throw DimensionError(fmt::format("matmul: cannot multiply {} by {}", shape_str(as), shape_str(bs)));
    }
    const std::size_t m = as[as.size() - 2];
    const std::size_t p = as[as.size() - 1];
    const std::size_t n = bs[bs.size() - 1];
    BatchPlan plan;
    try {
        plan = plan_matmul_batches(Shape(as.begin(), as.end() - 2), Shape(bs.begin(), bs.end() - 2));
    } catch (const DimensionError&) {
        throw DimensionError(fmt::format("matmul: batch dimensions of {} and {} do not broadcast", shape_str(as),
                                         shape_str(bs)));
    }
    Shape out_shape = plan.batch_shape;
    out_shape.push_back(m);
    out_shape.push_back(n);
    Tensor out(out_shape, 0.0);
    const double* ap = a.value().ptr();
    const double* bp = b.value().ptr();
    for (std::size_t batch = 0; batch < plan.a_offsets.size(); ++batch) {
        gemm_nn(m, n, p, ap + plan.a_offsets[batch] * m * p, bp + plan.b_offsets[batch] * p * n,
                out.ptr() + batch * m * n);
    }
    return Var::make(std::move(out), {a, b}, [plan = std::move(plan), m, n, p](Node& self) {
        const double* dc = self.grad.ptr();
        if (self.input_needs_grad(0)) {
            double* da = self.input_grad(0).ptr();
            const double* bp = self.input_value(1).ptr();
            std::vector<double> scratch;
            for (std::size_t batch = 0; batch < plan.a_offsets.size(); ++batch) {
                gemm_nt(m, n, p, dc + batch * m * n, bp + plan.b_offsets[batch] * p * n,
                        da + plan.a_offsets[batch] * m * p, scratch);
            }
        }
        if (self.input_needs_grad(1)) {
            double* db = self.input_grad(1).ptr();
            const double* ap = self.input_value(0).ptr();
            for (std::size_t batch = 0; batch < plan.a_offsets.size(); ++batch) {
                gemm_tn(m, n, p, ap + plan.a_offsets[batch] * m * p, dc + batch * m * n,
                        db + plan.b_offsets[batch] * p * n);
            }
        }
    });
}

Var affine(const Var& x, const Var& w, const std::optional<Var>& b) {
    if (w.rank() != 2 || x.rank() == 0 || x.shape().back() != w.dim(0)) {
        throw DimensionError(fmt::format("affine: input {} does not match weight {}", shape_str(x.shape()),
                                         shape_str(w.shape())));
    }
    Var y;
    if (x.rank() == 1) {
        y = reshape(matmul(reshape(x, {1, x.dim(0)}), w), {w.dim(1)});
    } else {
        y = matmul(x, w);
    }
    if (b.has_value()) {
        if (b->shape() != Shape{w.dim(1)}) {
            throw DimensionError(fmt::format("affine: bias {} does not match weight {}", shape_str(b->shape()),
                                             shape_str(w.shape())));
        }
        y = add(y, *b);
    }
    return y;
}

Var reshape(const Var& x, Shape shape) {
    Tensor out = x.value().reshaped(std::move(shape));
    return Var::make(std::move(out), {x}, [](Node& self) {
        Tensor& gx = self.input_grad(0);
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += self.grad[i];
    });
}

Var permute(const Var& x, std::span<const std::size_t> axes) {
    const Shape& in_shape = x.shape();
    const std::size_t rank = in_shape.size();
    std::vector<bool> used(rank, false);
    if (axes.size() != rank) throw DimensionError(fmt::format("permute: {} axes for {}", axes.size(), shape_str(in_shape)));
    for (std::size_t a : axes) {
        if (a >= rank || used[a]) throw DimensionError("permute: axes are not a permutation");
        used[a] = true;
    }
    Shape out_shape(rank);
    for (std::size_t i = 0; i < rank; ++i) out_shape[i] = in_shape[axes[i]];
    const auto in_strides = strides_of(in_shape);
    // source offset of each destination element
    std::vector<std::size_t> source(shape_numel(out_shape));
    std::vector<std::size_t> idx(rank, 0);
    for (std::size_t flat = 0; flat < source.size(); ++flat) {
        std::size_t off = 0;
        for (std::size_t d = 0; d < rank; ++d) off += idx[d] * in_strides[axes[d]];
        source[flat] = off;
        for (std::size_t d = rank; d-- > 0;) {
            if (++idx[d] < out_shape[d]) break;
            idx[d] = 0;
        }
    }
    Tensor out(out_shape);
    const Tensor& xv = x.value();
    for (std::size_t i = 0; i < source.size(); ++i) out[i] = xv[source[i]];
    return Var::make(std::move(out), {x}, [source = std::move(source)](Node& self) {
        Tensor& gx = self.input_grad(0);
        for (std::size_t i = 0; i < source.size(); ++i) gx[source[i]] += self.grad[i];
    });
}

Var permute(const Var& x, std::initializer_list<std::size_t> axes) {
    return permute(x, std::span<const std::size_t>(axes.begin(), axes.size()));
}

Var transpose(const Var& x) {
    const std::size_t rank = x.rank();
    if (rank < 2) throw DimensionError(fmt::format("transpose of {}", shape_str(x.shape())));
    std::vector<std::size_t> axes(rank);
    std::iota(axes.begin(), axes.end(), 0);
    std::swap(axes[rank - 1], axes[rank - 2]);
    return permute(x, axes);
}

Var stack(std::span<const Var> parts, std::size_t axis) {
    if (parts.empty()) throw DimensionError("stack of zero tensors");
    const Shape& part_shape = parts[0].shape();
    if (axis > part_shape.size()) throw DimensionError("stack: axis out of range");
    for (const Var& p : parts) {
        if (p.shape() != part_shape) {
            throw DimensionError(fmt::format("stack: {} vs {}", shape_str(part_shape), shape_str(p.shape())));
        }
    }
    const std::size_t outer = shape_numel(Shape(part_shape.begin(), part_shape.begin() + static_cast<std::ptrdiff_t>(axis)));
    const std::size_t inner = shape_numel(Shape(part_shape.begin() + static_cast<std::ptrdiff_t>(axis), part_shape.end()));
    const std::size_t count = parts.size();
    Shape out_shape = part_shape;
    out_shape.insert(out_shape.begin() + static_cast<std::ptrdiff_t>(axis), count);
    Tensor out(out_shape);
    for (std::size_t j = 0; j < count; ++j) {
        const double* src = parts[j].value().ptr();
        for (std::size_t o = 0; o < outer; ++o) {
            std::copy(src + o * inner, src + (o + 1) * inner, out.ptr() + (o * count + j) * inner);
        }
    }
    std::vector<Var> inputs(parts.begin(), parts.end());
    return Var::make(std::move(out), std::move(inputs), [outer, inner, count](Node& self) {
        for (std::size_t j = 0; j < count; ++j) {
            if (!self.input_needs_grad(j)) continue;
            double* dst = self.input_grad(j).ptr();
            for (std::size_t o = 0; o < outer; ++o) {
                const double* src = self.grad.ptr() + (o * count + j) * inner;
                for (std::size_t i = 0; i < inner; ++i) dst[o * inner + i] += src[i];
            }
        }
    });
}

Var slice_rows(const Var& x, std::size_t begin, std::size_t end) {
    Tensor out = x.value().rows(begin, end);
    const std::size_t stride = out.size() / std::max<std::size_t>(end - begin, 1);
    return Var::make(std::move(out), {x}, [begin, stride](Node& self) {
        Tensor& gx = self.input_grad(0);
        for (std::size_t i = 0; i < self.grad.size(); ++i) gx[begin * stride + i] += self.grad[i];
    });
}

Var gather_rows(const Var& table, std::span<const int> ids) {
    if (table.rank() != 2) throw DimensionError(fmt::format("gather_rows from {}", shape_str(table.shape())));
    const std::size_t rows = table.dim(0);
    const std::size_t width = table.dim(1);
    std::vector<int> id_copy(ids.begin(), ids.end());
    Tensor out({ids.size(), width});
    for (std::size_t r = 0; r < ids.size(); ++r) {
        if (ids[r] < 0 || static_cast<std::size_t>(ids[r]) >= rows) {
            throw std::out_of_range(fmt::format("token id {} outside table of {} rows", ids[r], rows));
        }
        const double* src = table.value().ptr() + static_cast<std::size_t>(ids[r]) * width;
        std::copy(src, src + width, out.ptr() + r * width);
    }
    return Var::make(std::move(out), {table}, [ids = std::move(id_copy), width](Node& self) {
        double* dst = self.input_grad(0).ptr();
        for (std::size_t r = 0; r < ids.size(); ++r) {
            const double* src = self.grad.ptr() + r * width;
            double* row = dst + static_cast<std::size_t>(ids[r]) * width;
            for (std::size_t c = 0; c < width; ++c) row[c] += src[c];
        }
    });
}

Var softmax(const Var& x, std::size_t axis, const Tensor* keep_mask) {
    const Shape& shape = x.shape();
    if (axis >= shape.size()) throw DimensionError(fmt::format("softmax axis {} on {}", axis, shape_str(shape)));
    const std::size_t extent = shape[axis];
    if (extent == 0) throw DimensionError("softmax over an empty axis");
    if (keep_mask != nullptr) {
        if (axis + 1 != shape.size()) throw DimensionError("softmax: masks apply to the last axis only");
        require_suffix("softmax mask", shape, keep_mask->shape());
    }
    const std::size_t outer = shape_numel(Shape(shape.begin(), shape.begin() + static_cast<std::ptrdiff_t>(axis)));
    const std::size_t inner = shape_numel(Shape(shape.begin() + static_cast<std::ptrdiff_t>(axis) + 1, shape.end()));
    const Tensor& xv = x.value();
    Tensor out(shape);
    const std::size_t mask_n = keep_mask != nullptr ? keep_mask->size() : 1;
    for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t in = 0; in < inner; ++in) {
            const std::size_t base = o * extent * inner + in;
            auto kept = [&](std::size_t e) {
                return keep_mask == nullptr || (*keep_mask)[(base + e * inner) % mask_n] != 0.0;
            };
            double mx = -std::numeric_limits<double>::infinity();
            for (std::size_t e = 0; e < extent; ++e) {
                if (kept(e)) mx = std::max(mx, xv[base + e * inner]);
            }
            if (mx == -std::numeric_limits<double>::infinity()) {
                throw NumericError("softmax: every position of a row is masked");
            }
            double total = 0.0;
            for (std::size_t e = 0; e < extent; ++e) {
                const double v = kept(e) ? std::exp(xv[base + e * inner] - mx) : 0.0;
                out[base + e * inner] = v;
                total += v;
            }
            for (std::size_t e = 0; e < extent; ++e) out[base + e * inner] /= total;
        }
    }
    return Var::make(std::move(out), {x}, [outer, inner, extent](Node& self) {
        const Tensor& y = self.value;
        Tensor& gx = self.input_grad(0);
        for (std::size_t o = 0; o < outer; ++o) {
            for (std::size_t in = 0; in < inner; ++in) {
                const std::size_t base = o * extent * inner + in;
                double dot = 0.0;
                for (std::size_t e = 0; e < extent; ++e) dot += self.grad[base + e * inner] * y[base + e * inner];
                for (std::size_t e = 0; e < extent; ++e) {
                    const std::size_t i = base + e * inner;
                    gx[i] += y[i] * (self.grad[i] - dot);
                }
            }
        }
    });
}

Var layer_norm(const Var& x, const Var& gain, const Var& bias) {
    if (x.rank() == 0) throw DimensionError("layer_norm of a scalar");
    const std::size_t width = x.shape().back();
    if (gain.shape() != Shape{width} || bias.shape() != Shape{width}) {
        throw DimensionError(fmt::format("layer_norm: gain {} / bias {} for input {}", shape_str(gain.shape()),
                                         shape_str(bias.shape()), shape_str(x.shape())));
    }
    const std::size_t rows = x.value().size() / width;
    const Tensor& xv = x.value();
    const Tensor& g = gain.value();
    const Tensor& b = bias.value();
    Tensor normalized(x.shape());
    std::vector<double> inv_std(rows);
    Tensor out(x.shape());
    for (std::size_t r = 0; r < rows; ++r) {
        const double* row = xv.ptr() + r * width;
        double mu = 0.0;
        for (std::size_t c = 0; c < width; ++c) mu += row[c];
        mu /= static_cast<double>(width);
        double var = 0.0;
        for (std::size_t c = 0; c < width; ++c) var += (row[c] - mu) * (row[c] - mu);
        var /= static_cast<double>(width);
        const double rstd = 1.0 / std::sqrt(var + kLayerNormEpsilon);
        inv_std[r] = rstd;
        for (std::size_t c = 0; c < width; ++c) {
            const double xhat = (row[c] - mu) * rstd;
            normalized[r * width + c] = xhat;
            out[r * width + c] = xhat * g[c] + b[c];
        }
    }
    return Var::make(std::move(out), {x, gain, bias},
                     [normalized = std::move(normalized), inv_std = std::move(inv_std), width, rows](Node& self) {
                         const Tensor& g = self.input_value(1);
                         const double inv_w = 1.0 / static_cast<double>(width);
                         if (self.input_needs_grad(0)) {
                             Tensor& gx = self.input_grad(0);
                             for (std::size_t r = 0; r < rows; ++r) {
                                 const double* dy = self.grad.ptr() + r * width;
                                 const double* xh = normalized.ptr() + r * width;
                                 double sum_d = 0.0, sum_dx = 0.0;
                                 for (std::size_t c = 0; c < width; ++c) {
                                     const double d = dy[c] * g[c];
                                     sum_d += d;
                                     sum_dx += d * xh[c];
                                 }
                                 for (std::size_t c = 0; c < width; ++c) {
                                     const double d = dy[c] * g[c];
                                     gx[r * width + c] += inv_std[r] * (d - inv_w * sum_d - xh[c] * inv_w * sum_dx);
                                 }
                             }
                         }
                         if (self.input_needs_grad(1)) {
                             Tensor& gg = self.input_grad(1);
                             for (std::size_t i = 0; i < self.grad.size(); ++i) gg[i % width] += self.grad[i] * normalized[i];
                         }
                         if (self.input_needs_grad(2)) {
                             Tensor& gb = self.input_grad(2);
                             for (std::size_t i = 0; i < self.grad.size(); ++i) gb[i % width] += self.grad[i];
                         }
                     });
}

Var relu(const Var& x) {
    Tensor out = x.value();
    for (double& v : out.data()) v = v > 0.0 ? v : 0.0;
    return Var::make(std::move(out), {x}, [](Node& self) {
        Tensor& gx = self.input_grad(0);
        const Tensor& xv = self.input_value(0);
        for (std::size_t i = 0; i < gx.size(); ++i) {
            if (xv[i] > 0.0) gx[i] += self.grad[i];
        }
    });
}

Var sigmoid(const Var& x) {
    Tensor out = x.value();
    for (double& v : out.data()) {
        if (v >= 0.0) {
            v = 1.0 / (1.0 + std::exp(-v));
        } else {
            const double e = std::exp(v);
            v = e / (1.0 + e);
        }
    }
    return Var::make(std::move(out), {x}, [](Node& self) {
        Tensor& gx = self.input_grad(0);
        for (std::size_t i = 0; i < gx.size(); ++i) {
            const double s = self.value[i];
            gx[i] += self.grad[i] * s * (1.0 - s);
        }
    });
}

Var dropout(const Var& x, double rate, bool training, Rng& rng) {
    if (!(rate >= 0.0 && rate < 1.0)) throw ConfigError(fmt::format("dropout rate {} outside [0, 1)", rate));
    if (!training || rate == 0.0) return x;
    const double keep_scale = 1.0 / (1.0 - rate);
    Tensor mask(x.shape());
    for (double& m : mask.data()) {
        const double u = uniform01(rng);
        m = u < rate ? 0.0 : keep_scale;
    }
    return mul(x, Var::constant(std::move(mask)));
}

Var cross_entropy_smoothed(const Var& logits, std::span<const int> targets, double smoothing, int pad_id) {
    if (logits.rank() != 2 || logits.dim(0) != targets.size()) {
        throw DimensionError(fmt::format("cross_entropy: logits {} for {} targets", shape_str(logits.shape()),
                                         targets.size()));
    }
    if (!(smoothing >= 0.0 && smoothing < 1.0)) throw ConfigError("label smoothing outside [0, 1)");
    const std::size_t positions = logits.dim(0);
    const std::size_t vocab = logits.dim(1);
    if (vocab < 2 && smoothing > 0.0) throw ConfigError("label smoothing needs at least two classes");
    const double on = 1.0 - smoothing;
    const double off = vocab > 1 ? smoothing / static_cast<double>(vocab - 1) : 0.0;
    // sum_c q_c log q_c, identical for every position
    double neg_entropy = 0.0;
    if (on > 0.0) neg_entropy += on * std::log(on);
    if (off > 0.0) neg_entropy += static_cast<double>(vocab - 1) * off * std::log(off);

    const Tensor& lv = logits.value();
    Tensor probs({positions, vocab});
    std::vector<int> tgt(targets.begin(), targets.end());
    std::size_t counted = 0;
    double total = 0.0;
    for (std::size_t r = 0; r < positions; ++r) {
        const double* row = lv.ptr() + r * vocab;
        double mx = *std::max_element(row, row + vocab);
        double z = 0.0;
        for (std::size_t c = 0; c < vocab; ++c) z += std::exp(row[c] - mx);
        const double log_z = mx + std::log(z);
        for (std::size_t c = 0; c < vocab; ++c) probs[r * vocab + c] = std::exp(row[c] - log_z);
        if (tgt[r] == pad_id) continue;
        if (tgt[r] < 0 || static_cast<std::size_t>(tgt[r]) >= vocab) {
            throw std::out_of_range(fmt::format("target id {} outside vocabulary of {}", tgt[r], vocab));
        }
        ++counted;
        double cross = 0.0;  // -sum_c q_c log p_c
        double row_sum = 0.0;
        for (std::size_t c = 0; c < vocab; ++c) row_sum += row[c] - log_z;
        const double log_p_target = row[tgt[r]] - log_z;
        cross = -(on * log_p_target + off * (row_sum - log_p_target));
        total += neg_entropy + cross;
    }
    if (counted == 0) throw std::invalid_argument("cross_entropy: every position is padding");
    const double inv = 1.0 / static_cast<double>(counted);
    return Var::make(Tensor::scalar(total * inv), {logits},
                     [probs = std::move(probs), tgt = std::move(tgt), pad_id, on, off, inv, vocab](Node& self) {
                         Tensor& gl = self.input_grad(0);
                         const double upstream = self.grad[0] * inv;
                         for (std::size_t r = 0; r < tgt.size(); ++r) {
                             if (tgt[r] == pad_id) continue;
                             // q sums to one, so d/dlogit_c = p_c - q_c
                             for (std::size_t c = 0; c < vocab; ++c) {
                                 const double q = static_cast<int>(c) == tgt[r] ? on : off;
                                 gl[r * vocab + c] += upstream * (probs[r * vocab + c] - q);
                             }
                         }
                     });
}

Var sum(const Var& x) {
    double total = 0.0;
    for (double v : x.value().data()) total += v;
    return Var::make(Tensor::scalar(total), {x}, [](Node& self) {
        Tensor& gx = self.input_grad(0);
        for (double& g : gx.data()) g += self.grad[0];
    });
}

Var mean(const Var& x) {
    const std::size_t n = x.value().size();
    if (n == 0) throw DimensionError("mean of an empty tensor");
    return scale(sum(x), 1.0 / static_cast<double>(n));
}

}  // namespace hanmt
