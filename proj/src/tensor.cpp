#include "mdfg/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>

#define EIGEN_DONT_PARALLELIZE
#include <Eigen/Core>

namespace mdfg::tensor {

namespace {
using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<const RowMat>;
using MutMatMap = Eigen::Map<RowMat>;
}  // namespace

std::size_t numel(const Shape& s) {
    return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& s) {
    std::string out = "(";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(s[i]);
    }
    return out + ")";
}

Tensor::Tensor(Shape s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
    if (numel(shape) != data.size()) {
        throw Error(ErrorCode::ShapeMismatch, "shape " + shape_str(shape) + " holds " + std::to_string(numel(shape)) +
                                                  " values, got " + std::to_string(data.size()));
    }
}

Tensor::Tensor(Shape s, double fill) : shape(std::move(s)), data(numel(shape), fill) {}

double Tensor::item() const {
    if (data.size() != 1) throw Error(ErrorCode::NonScalarLoss, "item() on shape " + shape_str(shape));
    return data[0];
}

const Tensor& Var::value() const { return tape_->value(id_); }
bool Var::requires_grad() const { return tape_->requires_grad(id_); }

Var Tape::leaf(Tensor value, bool requires_grad) {
    nodes_.push_back(Node{std::move(value), {}, requires_grad, {}});
    return Var(this, nodes_.size() - 1);
}

Var Tape::record(Tensor value, std::initializer_list<Var> parents, Pullback pullback) {
    return record(std::move(value), std::span<const Var>(parents.begin(), parents.size()), std::move(pullback));
}

Var Tape::record(Tensor value, std::span<const Var> parents, Pullback pullback) {
    bool tracked = false;
    for (const auto& p : parents) {
        if (p.tape() != this) throw Error(ErrorCode::InvalidArgument, "operands live on different tapes");
        tracked = tracked || nodes_[p.id()].requires_grad;
    }
    nodes_.push_back(Node{std::move(value), {}, tracked, tracked ? std::move(pullback) : Pullback{}});
    return Var(this, nodes_.size() - 1);
}

std::vector<double>* Tape::grad_buffer(std::size_t id) {
    Node& n = nodes_[id];
    if (!n.requires_grad) return nullptr;
    if (n.grad.empty()) n.grad.assign(n.value.size(), 0.0);
    return &n.grad;
}

Tensor Tape::grad(Var v) const {
    const Node& n = nodes_[v.id()];
    if (n.grad.empty()) return Tensor(n.value.shape, 0.0);
    return Tensor(n.value.shape, n.grad);
}

void Tape::backward(Var loss) {
    if (loss.tape() != this) throw Error(ErrorCode::InvalidArgument, "loss belongs to another tape");
    if (nodes_[loss.id()].value.size() != 1) {
        throw Error(ErrorCode::NonScalarLoss, "backward needs a scalar, got shape " + shape_str(loss.shape()));
    }
    for (auto& n : nodes_) n.grad.clear();
    if (auto* g = grad_buffer(loss.id())) (*g)[0] = 1.0;
    for (std::size_t i = loss.id() + 1; i-- > 0;) {
        Node& n = nodes_[i];
        if (!n.pullback || n.grad.empty()) continue;
        const Tensor g(n.value.shape, n.grad);
        n.pullback(*this, g);
    }
}

namespace {

void require_same(const Shape& a, const Shape& b, const char* op) {
    if (a != b) throw Error(ErrorCode::ShapeMismatch, std::string(op) + ": " + shape_str(a) + " vs " + shape_str(b));
}

void require_rank(const Shape& s, std::size_t r, const char* op) {
    if (s.size() != r) {
        throw Error(ErrorCode::ShapeMismatch, std::string(op) + " expects rank " + std::to_string(r) + ", got " + shape_str(s));
    }
}

// Accumulates g (shaped like the output) into a possibly single-element operand.
void accumulate_broadcast(Tape& tape, Var operand, std::span<const double> g, double scale = 1.0) {
    auto* buf = tape.grad_buffer(operand.id());
    if (!buf) return;
    if (buf->size() == g.size()) {
        for (std::size_t i = 0; i < g.size(); ++i) (*buf)[i] += scale * g[i];
    } else {
        double s = 0.0;
        for (double v : g) s += v;
        (*buf)[0] += scale * s;
    }
}

enum class BinOp { add, sub, mul };

Var binary(Var a, Var b, BinOp op, const char* name) {
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    Shape out_shape;
    if (av.shape == bv.shape) {
        out_shape = av.shape;
    } else if (bv.size() == 1) {
        out_shape = av.shape;
    } else if (av.size() == 1) {
        out_shape = bv.shape;
    } else {
        require_same(av.shape, bv.shape, name);
    }
    const std::size_t n = numel(out_shape);
    const bool a_full = av.size() == n, b_full = bv.size() == n;
    Tensor out(out_shape, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const double x = av.data[a_full ? i : 0];
        const double y = bv.data[b_full ? i : 0];
        out.data[i] = op == BinOp::add ? x + y : op == BinOp::sub ? x - y : x * y;
    }
    return a.tape()->record(std::move(out), {a, b}, [a, b, op, a_full, b_full](Tape& t, const Tensor& g) {
        if (op != BinOp::mul) {
            accumulate_broadcast(t, a, g.data);
            accumulate_broadcast(t, b, g.data, op == BinOp::sub ? -1.0 : 1.0);
            return;
        }
        const auto& x = t.value(a.id()).data;
        const auto& y = t.value(b.id()).data;
        std::vector<double> ga(g.size()), gb(g.size());
        for (std::size_t i = 0; i < g.size(); ++i) {
            ga[i] = g.data[i] * y[b_full ? i : 0];
            gb[i] = g.data[i] * x[a_full ? i : 0];
        }
        accumulate_broadcast(t, a, ga);
        accumulate_broadcast(t, b, gb);
    });
}

template <typename Fwd, typename Deriv>
Var unary(Var a, Fwd fwd, Deriv deriv) {
    const Tensor& av = a.value();
    Tensor out(av.shape, 0.0);
    for (std::size_t i = 0; i < av.size(); ++i) out.data[i] = fwd(av.data[i]);
    return a.tape()->record(std::move(out), {a}, [a, deriv](Tape& t, const Tensor& g) {
        auto* buf = t.grad_buffer(a.id());
        if (!buf) return;
        const auto& x = t.value(a.id()).data;
        for (std::size_t i = 0; i < g.size(); ++i) (*buf)[i] += g.data[i] * deriv(x[i]);
    });
}

// outer x axis x inner decomposition of a reduction
struct AxisSplit {
    std::size_t outer = 1, extent = 1, inner = 1;
    Shape out_shape;
};

AxisSplit split_axis(const Shape& s, std::size_t axis, const char* op) {
    AxisSplit sp;
    if (axis == kAllAxes) {
        sp.extent = numel(s);
        return sp;
    }
    if (axis >= s.size()) {
        throw Error(ErrorCode::ShapeMismatch, std::string(op) + ": axis " + std::to_string(axis) + " out of range for " + shape_str(s));
    }
    for (std::size_t i = 0; i < axis; ++i) sp.outer *= s[i];
    sp.extent = s[axis];
    for (std::size_t i = axis + 1; i < s.size(); ++i) sp.inner *= s[i];
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i != axis) sp.out_shape.push_back(s[i]);
    }
    return sp;
}

Var reduce_sum(Var a, std::size_t axis, double scale, const char* name) {
    const Tensor& av = a.value();
    const AxisSplit sp = split_axis(av.shape, axis, name);
    Tensor out(sp.out_shape, 0.0);
    for (std::size_t o = 0; o < sp.outer; ++o) {
        for (std::size_t e = 0; e < sp.extent; ++e) {
            const double* src = av.data.data() + (o * sp.extent + e) * sp.inner;
            double* dst = out.data.data() + o * sp.inner;
            for (std::size_t i = 0; i < sp.inner; ++i) dst[i] += src[i];
        }
    }
    if (scale != 1.0) {
        for (auto& v : out.data) v *= scale;
    }
    return a.tape()->record(std::move(out), {a}, [a, sp, scale](Tape& t, const Tensor& g) {
        auto* buf = t.grad_buffer(a.id());
        if (!buf) return;
        for (std::size_t o = 0; o < sp.outer; ++o) {
            for (std::size_t e = 0; e < sp.extent; ++e) {
                double* dst = buf->data() + (o * sp.extent + e) * sp.inner;
                const double* src = g.data.data() + o * sp.inner;
                for (std::size_t i = 0; i < sp.inner; ++i) dst[i] += scale * src[i];
            }
        }
    });
}

}  // namespace

Var add(Var a, Var b) { return binary(a, b, BinOp::add, "add"); }
Var sub(Var a, Var b) { return binary(a, b, BinOp::sub, "sub"); }
Var mul(Var a, Var b) { return binary(a, b, BinOp::mul, "mul"); }

Var scalar_mul(Var a, double c) {
    return unary(a, [c](double x) { return c * x; }, [c](double) { return c; });
}

Var relu(Var a) {
    return unary(a, [](double x) { return x > 0.0 ? x : 0.0; }, [](double x) { return x > 0.0 ? 1.0 : 0.0; });
}

Var log(Var a) {
    return unary(a, [](double x) { return std::log(x); }, [](double x) { return 1.0 / x; });
}

Var exp(Var a) {
    return unary(a, [](double x) { return std::exp(x); }, [](double x) { return std::exp(x); });
}

Var matmul(Var a, Var b) {
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    require_rank(av.shape, 2, "matmul");
    require_rank(bv.shape, 2, "matmul");
    const std::size_t m = av.shape[0], k = av.shape[1], n = bv.shape[1];
    if (bv.shape[0] != k) {
        throw Error(ErrorCode::ShapeMismatch, "matmul: " + shape_str(av.shape) + " x " + shape_str(bv.shape));
    }
    Tensor out(Shape{m, n}, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
        double* crow = out.data.data() + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double aip = av.data[i * k + p];
            const double* brow = bv.data.data() + p * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
        }
    }
    return a.tape()->record(std::move(out), {a, b}, [a, b, m, k, n](Tape& t, const Tensor& g) {
        const auto& A = t.value(a.id()).data;
        const auto& B = t.value(b.id()).data;
        if (auto* ga = t.grad_buffer(a.id())) {
            for (std::size_t i = 0; i < m; ++i) {
                const double* grow = g.data.data() + i * n;
                for (std::size_t p = 0; p < k; ++p) {
                    const double* brow = B.data() + p * n;
                    double s = 0.0;
                    for (std::size_t j = 0; j < n; ++j) s += grow[j] * brow[j];
                    (*ga)[i * k + p] += s;
                }
            }
        }
        if (auto* gb = t.grad_buffer(b.id())) {
            for (std::size_t i = 0; i < m; ++i) {
                const double* grow = g.data.data() + i * n;
                for (std::size_t p = 0; p < k; ++p) {
                    const double aip = A[i * k + p];
                    double* dst = gb->data() + p * n;
                    for (std::size_t j = 0; j < n; ++j) dst[j] += aip * grow[j];
                }
            }
        }
    });
}

Var bias_add(Var a, Var bias) {
    const Tensor& av = a.value();
    const Tensor& bv = bias.value();
    require_rank(bv.shape, 1, "bias_add");
    if (av.shape.empty() || av.shape.back() != bv.shape[0]) {
        throw Error(ErrorCode::ShapeMismatch, "bias_add: " + shape_str(av.shape) + " + " + shape_str(bv.shape));
    }
    const std::size_t n = bv.shape[0], rows = av.size() / n;
    Tensor out = av;
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t j = 0; j < n; ++j) out.data[r * n + j] += bv.data[j];
    }
    return a.tape()->record(std::move(out), {a, bias}, [a, bias, n, rows](Tape& t, const Tensor& g) {
        if (auto* ga = t.grad_buffer(a.id())) {
            for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g.data[i];
        }
        if (auto* gb = t.grad_buffer(bias.id())) {
            for (std::size_t r = 0; r < rows; ++r) {
                for (std::size_t j = 0; j < n; ++j) (*gb)[j] += g.data[r * n + j];
            }
        }
    });
}

namespace {

struct ConvGeom {
    std::size_t batch, cin, len, cout, kernel, stride, pad, out_len;

    // output positions l with 0 <= l*stride + k - pad < len
    std::pair<std::size_t, std::size_t> valid(std::size_t k) const {
        const auto s = static_cast<std::ptrdiff_t>(stride);
        const auto off = static_cast<std::ptrdiff_t>(k) - static_cast<std::ptrdiff_t>(pad);
        std::ptrdiff_t lo = off >= 0 ? 0 : (-off + s - 1) / s;
        std::ptrdiff_t hi = (static_cast<std::ptrdiff_t>(len) - 1 - off);
        hi = hi < 0 ? -1 : hi / s;
        hi = std::min<std::ptrdiff_t>(hi, static_cast<std::ptrdiff_t>(out_len) - 1);
        if (hi < lo) return {0, 0};
        return {static_cast<std::size_t>(lo), static_cast<std::size_t>(hi + 1)};
    }
};

// rows (ci, k), columns output positions; zero where the tap falls in the padding
void im2col(const double* x, const ConvGeom& cg, double* col) {
    for (std::size_t ci = 0; ci < cg.cin; ++ci) {
        const double* xr = x + ci * cg.len;
        for (std::size_t k = 0; k < cg.kernel; ++k) {
            double* row = col + (ci * cg.kernel + k) * cg.out_len;
            std::fill(row, row + cg.out_len, 0.0);
            const auto [lo, hi] = cg.valid(k);
            const std::ptrdiff_t off = static_cast<std::ptrdiff_t>(k) - static_cast<std::ptrdiff_t>(cg.pad);
            for (std::size_t l = lo; l < hi; ++l) row[l] = xr[static_cast<std::ptrdiff_t>(l * cg.stride) + off];
        }
    }
}

void col2im_add(const double* col, const ConvGeom& cg, double* dx) {
    for (std::size_t ci = 0; ci < cg.cin; ++ci) {
        double* dr = dx + ci * cg.len;
        for (std::size_t k = 0; k < cg.kernel; ++k) {
            const double* row = col + (ci * cg.kernel + k) * cg.out_len;
            const auto [lo, hi] = cg.valid(k);
            const std::ptrdiff_t off = static_cast<std::ptrdiff_t>(k) - static_cast<std::ptrdiff_t>(cg.pad);
            for (std::size_t l = lo; l < hi; ++l) dr[static_cast<std::ptrdiff_t>(l * cg.stride) + off] += row[l];
        }
    }
}

Var conv1d_impl(Var x, Var w, const Var* bias, std::size_t stride, std::size_t padding) {
    const Tensor& xv = x.value();
    const Tensor& wv = w.value();
    require_rank(xv.shape, 3, "conv1d input");
    require_rank(wv.shape, 3, "conv1d weight");
    if (stride == 0) throw Error(ErrorCode::InvalidArgument, "conv1d stride must be positive");
    ConvGeom cg{xv.shape[0], xv.shape[1], xv.shape[2], wv.shape[0], wv.shape[2], stride, padding, 0};
    if (wv.shape[1] != cg.cin) {
        throw Error(ErrorCode::ShapeMismatch, "conv1d: input " + shape_str(xv.shape) + " vs weight " + shape_str(wv.shape));
    }
    if (cg.len + 2 * padding < cg.kernel) {
        throw Error(ErrorCode::ShapeMismatch, "conv1d: kernel longer than padded input " + shape_str(xv.shape));
    }
    if (bias) {
        const Tensor& bv = bias->value();
        if (bv.shape != Shape{cg.cout}) {
            throw Error(ErrorCode::ShapeMismatch, "conv1d bias " + shape_str(bv.shape) + " for " + std::to_string(cg.cout) + " channels");
        }
    }
    cg.out_len = (cg.len + 2 * padding - cg.kernel) / stride + 1;
    const std::size_t ck = cg.cin * cg.kernel;

    // Each sample is its own product, so a row's result does not depend on the batch it came in.
    Tensor out(Shape{cg.batch, cg.cout, cg.out_len});
    const double* X = xv.data.data();
    const double* Bv = bias ? bias->value().data.data() : nullptr;
    const MatMap Wm(wv.data.data(), cg.cout, ck);
#pragma omp parallel
    {
        std::vector<double> col(ck * cg.out_len);
#pragma omp for schedule(static)
        for (std::ptrdiff_t bi = 0; bi < static_cast<std::ptrdiff_t>(cg.batch); ++bi) {
            const auto b = static_cast<std::size_t>(bi);
            im2col(X + b * cg.cin * cg.len, cg, col.data());
            MutMatMap Y(out.data.data() + b * cg.cout * cg.out_len, cg.cout, cg.out_len);
            Y.noalias() = Wm * MatMap(col.data(), ck, cg.out_len);
            if (Bv) {
                for (std::size_t co = 0; co < cg.cout; ++co) Y.row(co).array() += Bv[co];
            }
        }
    }

    std::vector<Var> parents{x, w};
    if (bias) parents.push_back(*bias);
    const bool has_bias = bias != nullptr;
    const Var bvar = bias ? *bias : Var{};
    return x.tape()->record(std::move(out), parents, [x, w, bvar, has_bias, cg, ck](Tape& t, const Tensor& g) {
        const double* X = t.value(x.id()).data.data();
        const MatMap Wm(t.value(w.id()).data.data(), cg.cout, ck);
        const double* G = g.data.data();
        const std::size_t gsz = cg.cout * cg.out_len;
        if (auto* gx = t.grad_buffer(x.id())) {
            double* DX = gx->data();
#pragma omp parallel
            {
                RowMat dcol(ck, cg.out_len);
#pragma omp for schedule(static)
                for (std::ptrdiff_t bi = 0; bi < static_cast<std::ptrdiff_t>(cg.batch); ++bi) {
                    const auto b = static_cast<std::size_t>(bi);
                    dcol.noalias() = Wm.transpose() * MatMap(G + b * gsz, cg.cout, cg.out_len);
                    col2im_add(dcol.data(), cg, DX + b * cg.cin * cg.len);
                }
            }
        }
        if (auto* gw = t.grad_buffer(w.id())) {
            MutMatMap DW(gw->data(), cg.cout, ck);
            std::vector<double> col(ck * cg.out_len);
            for (std::size_t b = 0; b < cg.batch; ++b) {
                im2col(X + b * cg.cin * cg.len, cg, col.data());
                DW.noalias() += MatMap(G + b * gsz, cg.cout, cg.out_len) * MatMap(col.data(), ck, cg.out_len).transpose();
            }
        }
        if (has_bias) {
            if (auto* gb = t.grad_buffer(bvar.id())) {
                for (std::size_t b = 0; b < cg.batch; ++b) {
                    for (std::size_t co = 0; co < cg.cout; ++co) {
                        const double* gr = G + b * gsz + co * cg.out_len;
                        double s = 0.0;
                        for (std::size_t l = 0; l < cg.out_len; ++l) s += gr[l];
                        (*gb)[co] += s;
                    }
                }
            }
        }
    });
}

}  // namespace

Var conv1d(Var x, Var w, Var bias, std::size_t stride, std::size_t padding) {
    return conv1d_impl(x, w, &bias, stride, padding);
}

Var conv1d(Var x, Var w, std::size_t stride, std::size_t padding) { return conv1d_impl(x, w, nullptr, stride, padding); }

Var l2_normalize(Var a, std::size_t axis, double min_norm) {
    const Tensor& av = a.value();
    require_rank(av.shape, 2, "l2_normalize");
    if (axis > 1) throw Error(ErrorCode::ShapeMismatch, "l2_normalize axis must be 0 or 1");
    const std::size_t rows = av.shape[0], cols = av.shape[1];
    // vectors run along `axis`; count and stride describe how to walk one
    const std::size_t nvec = axis == 1 ? rows : cols;
    const std::size_t len = axis == 1 ? cols : rows;
    auto index = [=](std::size_t v, std::size_t i) { return axis == 1 ? v * cols + i : i * cols + v; };

    std::vector<double> norms(nvec, 0.0);
    Tensor out(av.shape, 0.0);
    for (std::size_t v = 0; v < nvec; ++v) {
        double s = 0.0;
        for (std::size_t i = 0; i < len; ++i) s += av.data[index(v, i)] * av.data[index(v, i)];
        norms[v] = std::sqrt(s);
        if (!(norms[v] >= min_norm)) {
            throw Error(ErrorCode::ZeroVectorEmbedding, "vector " + std::to_string(v) + " has norm " + std::to_string(norms[v]));
        }
        for (std::size_t i = 0; i < len; ++i) out.data[index(v, i)] = av.data[index(v, i)] / norms[v];
    }
    // dy/dx = (I - y y^T) / |x|
    return a.tape()->record(std::move(out), {a}, [a, norms, nvec, len, index](Tape& t, const Tensor& g) {
        auto* buf = t.grad_buffer(a.id());
        if (!buf) return;
        const auto& x = t.value(a.id()).data;
        for (std::size_t v = 0; v < nvec; ++v) {
            const double nv = norms[v];
            double dot = 0.0;
            for (std::size_t i = 0; i < len; ++i) dot += g.data[index(v, i)] * x[index(v, i)] / nv;
            for (std::size_t i = 0; i < len; ++i) {
                const double y = x[index(v, i)] / nv;
                (*buf)[index(v, i)] += (g.data[index(v, i)] - dot * y) / nv;
            }
        }
    });
}

Var sum(Var a, std::size_t axis) { return reduce_sum(a, axis, 1.0, "sum"); }

Var mean(Var a, std::size_t axis) {
    const AxisSplit sp = split_axis(a.shape(), axis, "mean");
    if (sp.extent == 0) throw Error(ErrorCode::ShapeMismatch, "mean over an empty axis");
    return reduce_sum(a, axis, 1.0 / static_cast<double>(sp.extent), "mean");
}

Var max(Var a, std::size_t axis) {
    const Tensor& av = a.value();
    const AxisSplit sp = split_axis(av.shape, axis, "max");
    if (sp.extent == 0) throw Error(ErrorCode::ShapeMismatch, "max over an empty axis");
    Tensor out(sp.out_shape, 0.0);
    std::vector<std::size_t> arg(out.size(), 0);
    for (std::size_t o = 0; o < sp.outer; ++o) {
        for (std::size_t i = 0; i < sp.inner; ++i) {
            std::size_t best = 0;
            double bv = av.data[(o * sp.extent) * sp.inner + i];
            for (std::size_t e = 1; e < sp.extent; ++e) {
                const double v = av.data[(o * sp.extent + e) * sp.inner + i];
                if (v > bv) {
                    bv = v;
                    best = e;
                }
            }
            out.data[o * sp.inner + i] = bv;
            arg[o * sp.inner + i] = (o * sp.extent + best) * sp.inner + i;
        }
    }
    return a.tape()->record(std::move(out), {a}, [a, arg](Tape& t, const Tensor& g) {
        auto* buf = t.grad_buffer(a.id());
        if (!buf) return;
        for (std::size_t j = 0; j < arg.size(); ++j) (*buf)[arg[j]] += g.data[j];
    });
}

Var concat(std::span<const Var> parts, std::size_t axis) {
    if (parts.empty()) throw Error(ErrorCode::ShapeMismatch, "concat of nothing");
    const Shape& s0 = parts[0].shape();
    if (axis >= s0.size()) throw Error(ErrorCode::ShapeMismatch, "concat axis out of range for " + shape_str(s0));
    Shape out_shape = s0;
    out_shape[axis] = 0;
    for (const auto& p : parts) {
        Shape probe = p.shape();
        if (probe.size() != s0.size()) require_same(probe, s0, "concat");
        const std::size_t ext = probe[axis];
        probe[axis] = s0[axis];
        require_same(probe, s0, "concat");
        out_shape[axis] += ext;
    }
    std::size_t outer = 1, inner = 1;
    for (std::size_t i = 0; i < axis; ++i) outer *= s0[i];
    for (std::size_t i = axis + 1; i < s0.size(); ++i) inner *= s0[i];

    Tensor out(out_shape, 0.0);
    std::vector<std::size_t> offsets;
    std::size_t off = 0;
    for (const auto& p : parts) {
        offsets.push_back(off);
        const std::size_t ext = p.shape()[axis];
        for (std::size_t o = 0; o < outer; ++o) {
            const double* src = p.value().data.data() + o * ext * inner;
            std::copy(src, src + ext * inner, out.data.data() + (o * out_shape[axis] + off) * inner);
        }
        off += ext;
    }
    std::vector<Var> ps(parts.begin(), parts.end());
    const std::size_t total = out_shape[axis];
    return parts[0].tape()->record(std::move(out), ps, [ps, offsets, outer, inner, total, axis](Tape& t, const Tensor& g) {
        for (std::size_t k = 0; k < ps.size(); ++k) {
            auto* buf = t.grad_buffer(ps[k].id());
            if (!buf) continue;
            const std::size_t ext = t.value(ps[k].id()).shape[axis];
            for (std::size_t o = 0; o < outer; ++o) {
                const double* src = g.data.data() + (o * total + offsets[k]) * inner;
                double* dst = buf->data() + o * ext * inner;
                for (std::size_t i = 0; i < ext * inner; ++i) dst[i] += src[i];
            }
        }
    });
}

Var transpose(Var a) {
    const Tensor& av = a.value();
    require_rank(av.shape, 2, "transpose");
    const std::size_t m = av.shape[0], n = av.shape[1];
    Tensor out(Shape{n, m}, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) out.data[j * m + i] = av.data[i * n + j];
    }
    return a.tape()->record(std::move(out), {a}, [a, m, n](Tape& t, const Tensor& g) {
        auto* buf = t.grad_buffer(a.id());
        if (!buf) return;
        for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < n; ++j) (*buf)[i * n + j] += g.data[j * m + i];
        }
    });
}

Var gather_rows(Var a, std::span<const std::size_t> rows) {
    const Tensor& av = a.value();
    if (av.shape.empty()) throw Error(ErrorCode::ShapeMismatch, "gather_rows on a scalar");
    const std::size_t width = av.size() / std::max<std::size_t>(av.shape[0], 1);
    Shape out_shape = av.shape;
    out_shape[0] = rows.size();
    Tensor out(out_shape, 0.0);
    for (std::size_t r = 0; r < rows.size(); ++r) {
        if (rows[r] >= av.shape[0]) {
            throw Error(ErrorCode::ShapeMismatch, "gather_rows index " + std::to_string(rows[r]) + " for " + shape_str(av.shape));
        }
        std::copy_n(av.data.begin() + static_cast<std::ptrdiff_t>(rows[r] * width), width,
                    out.data.begin() + static_cast<std::ptrdiff_t>(r * width));
    }
    std::vector<std::size_t> idx(rows.begin(), rows.end());
    return a.tape()->record(std::move(out), {a}, [a, idx, width](Tape& t, const Tensor& g) {
        auto* buf = t.grad_buffer(a.id());
        if (!buf) return;
        for (std::size_t r = 0; r < idx.size(); ++r) {
            for (std::size_t j = 0; j < width; ++j) (*buf)[idx[r] * width + j] += g.data[r * width + j];
        }
    });
}

Var reshape(Var a, Shape shape) {
    if (numel(shape) != a.value().size()) {
        throw Error(ErrorCode::ShapeMismatch, "reshape " + shape_str(a.shape()) + " to " + shape_str(shape));
    }
    Tensor out(std::move(shape), a.value().data);
    return a.tape()->record(std::move(out), {a}, [a](Tape& t, const Tensor& g) {
        auto* buf = t.grad_buffer(a.id());
        if (!buf) return;
        for (std::size_t i = 0; i < g.size(); ++i) (*buf)[i] += g.data[i];
    });
}

double grad_check(const TapeFunction& f, const std::vector<Tensor>& params, double eps) {
    Tape tape;
    std::vector<Var> vars;
    for (const auto& p : params) vars.push_back(tape.leaf(p, true));
    Var loss = f(tape, vars);
    tape.backward(loss);

    auto evaluate = [&](const std::vector<Tensor>& ps) {
        Tape t;
        std::vector<Var> vs;
        for (const auto& p : ps) vs.push_back(t.leaf(p, false));
        return f(t, vs).value().item();
    };

    double worst = 0.0;
    std::vector<Tensor> probe = params;
    for (std::size_t k = 0; k < params.size(); ++k) {
        const Tensor analytic = tape.grad(vars[k]);
        for (std::size_t i = 0; i < params[k].size(); ++i) {
            const double orig = params[k].data[i];
            probe[k].data[i] = orig + eps;
            const double up = evaluate(probe);
            probe[k].data[i] = orig - eps;
            const double down = evaluate(probe);
            probe[k].data[i] = orig;
            const double numeric = (up - down) / (2.0 * eps);
            const double a = analytic.data[i];
            const double rel = std::abs(a - numeric) / std::max(1e-8, std::abs(a) + std::abs(numeric));
            worst = std::max(worst, rel);
        }
    }
    return worst;
}

}  // namespace mdfg::tensor
