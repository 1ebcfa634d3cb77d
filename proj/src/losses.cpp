#include "mdfg/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace mdfg::losses {

using tensor::Shape;
using tensor::Tape;
using tensor::Tensor;
using tensor::Var;

SupConDenominator parse_denominator(const std::string& s) {
    if (s == "all") return SupConDenominator::all;
    if (s == "negatives_only") return SupConDenominator::negatives_only;
    throw Error(ErrorCode::ConfigError, "supcon_denominator must be 'all' or 'negatives_only', got '" + s + "'");
}

const char* to_string(SupConDenominator d) { return d == SupConDenominator::all ? "all" : "negatives_only"; }

namespace {

double dot(const double* a, const double* b, std::size_t n) {
    double s = 0.0;
    for (std::size_t k = 0; k < n; ++k) s += a[k] * b[k];
    return s;
}

// log sum_j exp(v_j) over the masked entries, with max subtraction
double masked_lse(const std::vector<double>& v, const std::vector<char>& mask) {
    double m = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < v.size(); ++j) {
        if (mask[j]) m = std::max(m, v[j]);
    }
    double s = 0.0;
    for (std::size_t j = 0; j < v.size(); ++j) {
        if (mask[j]) s += std::exp(v[j] - m);
    }
    return m + std::log(s);
}

Var supcon_normalized(Var zn, std::span<const int> labels, double t, SupConDenominator denom) {
    const Tensor& zv = zn.value();
    const std::size_t b = zv.shape[0], p = zv.shape[1];
    const double* Z = zv.data.data();

    std::vector<double> sim(b * b, 0.0);
    for (std::size_t i = 0; i < b; ++i) {
        for (std::size_t j = 0; j < b; ++j) sim[i * b + j] = dot(Z + i * p, Z + j * p, p) / t;
    }

    // dL/dsim
    std::vector<double> gsim(b * b, 0.0);
    double loss = 0.0;
    bool any = false;
    std::vector<double> row(b);
    std::vector<char> in_denom(b);
    for (std::size_t i = 0; i < b; ++i) {
        std::size_t n_pos = 0, n_den = 0;
        for (std::size_t j = 0; j < b; ++j) {
            const bool same = labels[j] == labels[i];
            if (j != i && same) ++n_pos;
            in_denom[j] = j != i && (denom == SupConDenominator::all || !same);
            n_den += in_denom[j] ? 1 : 0;
            row[j] = sim[i * b + j];
        }
        if (n_pos == 0 || n_den == 0) continue;
        any = true;
        const double lse = masked_lse(row, in_denom);
        double inner = 0.0;
        for (std::size_t j = 0; j < b; ++j) {
            if (j != i && labels[j] == labels[i]) inner += row[j] - lse;
        }
        loss -= inner / static_cast<double>(n_pos);
        for (std::size_t j = 0; j < b; ++j) {
            double g = 0.0;
            if (j != i && labels[j] == labels[i]) g -= 1.0 / static_cast<double>(n_pos);
            if (in_denom[j]) g += std::exp(row[j] - lse);
            gsim[i * b + j] = g;
        }
    }
    if (!any) throw Error(ErrorCode::DegenerateBatch, "no anchor in the batch has both a positive and a denominator term");

    return zn.tape()->record(Tensor::scalar(loss), {zn}, [zn, gsim = std::move(gsim), b, p, t](Tape& tape, const Tensor& g) {
        auto* buf = tape.grad_buffer(zn.id());
        if (!buf) return;
        const double* Zs = tape.value(zn.id()).data.data();
        const double scale = g.data[0] / t;
        for (std::size_t i = 0; i < b; ++i) {
            double* gi = buf->data() + i * p;
            for (std::size_t j = 0; j < b; ++j) {
                const double w = (gsim[i * b + j] + gsim[j * b + i]) * scale;
                if (w == 0.0) continue;
                const double* zj = Zs + j * p;
                for (std::size_t k = 0; k < p; ++k) gi[k] += w * zj[k];
            }
        }
    });
}

}  // namespace

Var sup_con_loss(Var z, std::span<const int> labels, double temperature, SupConDenominator denom) {
    const Shape& s = z.shape();
    if (s.size() != 2) throw Error(ErrorCode::ShapeMismatch, "sup_con_loss expects a B x p matrix, got " + tensor::shape_str(s));
    if (s[0] != labels.size()) {
        throw Error(ErrorCode::LengthMismatch, std::to_string(s[0]) + " embeddings vs " + std::to_string(labels.size()) + " labels");
    }
    if (!(temperature > 0.0)) throw Error(ErrorCode::InvalidArgument, "temperature must be > 0");
    if (s[0] < 2) throw Error(ErrorCode::DegenerateBatch, "contrastive batch needs at least two samples");
    return supcon_normalized(tensor::l2_normalize(z, 1), labels, temperature, denom);
}

double sup_con_loss(const ContrastBatch& batch, SupConDenominator denom) {
    Tape tape;
    return sup_con_loss(tape.constant(batch.z), batch.labels, batch.temperature, denom).value().item();
}

Var align_loss(Var s, Var d) {
    const Tensor& sv = s.value();
    const Tensor& dv = d.value();
    if (sv.rank() != 2 || sv.shape != dv.shape) {
        throw Error(ErrorCode::ShapeMismatch, "align_loss: " + tensor::shape_str(sv.shape) + " vs " + tensor::shape_str(dv.shape));
    }
    const std::size_t n = sv.shape[0], m = sv.shape[1];
    if (n == 0) throw Error(ErrorCode::EmptySet, "align_loss on an empty batch");

    // sim[i][j] = s_i . d_j
    std::vector<double> sim(n * n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) sim[i * n + j] = dot(sv.data.data() + i * m, dv.data.data() + j * m, m);
    }
    std::vector<double> row_lse(n), col_lse(n);
    std::vector<double> buf(n);
    const std::vector<char> all(n, 1);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) buf[j] = sim[i * n + j];
        row_lse[i] = masked_lse(buf, all);
        for (std::size_t j = 0; j < n; ++j) buf[j] = sim[j * n + i];
        col_lse[i] = masked_lse(buf, all);
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += 2.0 * sim[i * n + i] - (row_lse[i] + col_lse[i]);
    const double loss = -acc / (2.0 * static_cast<double>(n));

    // dL/dsim_ij = (softmax_row_i(j) + softmax_col_j(i) - 2 delta_ij) / 2N
    std::vector<double> gsim(n * n);
    const double inv = 1.0 / (2.0 * static_cast<double>(n));
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            const double v = sim[i * n + j];
            gsim[i * n + j] = (std::exp(v - row_lse[i]) + std::exp(v - col_lse[j]) - (i == j ? 2.0 : 0.0)) * inv;
        }
    }
    return s.tape()->record(Tensor::scalar(loss), {s, d}, [s, d, gsim = std::move(gsim), n, m](Tape& tape, const Tensor& g) {
        const double up = g.data[0];
        const double* S = tape.value(s.id()).data.data();
        const double* D = tape.value(d.id()).data.data();
        if (auto* gs = tape.grad_buffer(s.id())) {
            for (std::size_t i = 0; i < n; ++i) {
                for (std::size_t j = 0; j < n; ++j) {
                    const double w = up * gsim[i * n + j];
                    for (std::size_t k = 0; k < m; ++k) (*gs)[i * m + k] += w * D[j * m + k];
                }
            }
        }
        if (auto* gd = tape.grad_buffer(d.id())) {
            for (std::size_t i = 0; i < n; ++i) {
                for (std::size_t j = 0; j < n; ++j) {
                    const double w = up * gsim[i * n + j];
                    for (std::size_t k = 0; k < m; ++k) (*gd)[j * m + k] += w * S[i * m + k];
                }
            }
        }
    });
}

double align_loss(const AlignBatch& batch) {
    Tape tape;
    return align_loss(tape.constant(batch.s), tape.constant(batch.d)).value().item();
}

LossReport total_loss(double l_sup, double l_align, double alpha) {
    if (!(alpha >= 0.0)) throw Error(ErrorCode::InvalidArgument, "alpha must be >= 0");
    return {l_sup, l_align, alpha, l_sup + alpha * l_align};
}

Var cross_entropy(Var logits, std::span<const int> labels) {
    const Tensor& lv = logits.value();
    if (lv.rank() != 2) throw Error(ErrorCode::ShapeMismatch, "cross_entropy expects B x C logits, got " + tensor::shape_str(lv.shape));
    const std::size_t b = lv.shape[0], c = lv.shape[1];
    if (b != labels.size()) {
        throw Error(ErrorCode::LengthMismatch, std::to_string(b) + " rows vs " + std::to_string(labels.size()) + " labels");
    }
    if (b == 0) throw Error(ErrorCode::EmptySet, "cross_entropy on an empty batch");
    std::vector<double> probs(b * c);
    double loss = 0.0;
    for (std::size_t i = 0; i < b; ++i) {
        const double* r = lv.data.data() + i * c;
        const auto label = static_cast<std::size_t>(labels[i]);
        if (label >= c) throw Error(ErrorCode::InvalidArgument, "label " + std::to_string(labels[i]) + " out of range");
        const double mx = *std::max_element(r, r + c);
        double s = 0.0;
        for (std::size_t j = 0; j < c; ++j) s += std::exp(r[j] - mx);
        const double lse = mx + std::log(s);
        for (std::size_t j = 0; j < c; ++j) probs[i * c + j] = std::exp(r[j] - lse);
        loss += lse - r[label];
    }
    loss /= static_cast<double>(b);
    std::vector<int> lab(labels.begin(), labels.end());
    return logits.tape()->record(Tensor::scalar(loss), {logits}, [logits, probs = std::move(probs), lab, b, c](Tape& tape, const Tensor& g) {
        auto* buf = tape.grad_buffer(logits.id());
        if (!buf) return;
        const double scale = g.data[0] / static_cast<double>(b);
        for (std::size_t i = 0; i < b; ++i) {
            for (std::size_t j = 0; j < c; ++j) {
                const double onehot = static_cast<std::size_t>(lab[i]) == j ? 1.0 : 0.0;
                (*buf)[i * c + j] += scale * (probs[i * c + j] - onehot);
            }
        }
    });
}

double cross_entropy(const Tensor& logits, std::span<const int> labels) {
    Tape tape;
    return cross_entropy(tape.constant(logits), labels).value().item();
}

}  // namespace mdfg::losses
