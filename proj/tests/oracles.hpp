#pragma once

// Straightforward reimplementations used as references by the tests.
// Nothing here shares code with the library beyond the public types.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <numeric>
#include <random>
#include <vector>

#include "mdfg/common.hpp"

namespace oracle {

using mdfg::cplx;

inline std::vector<cplx> dft(const std::vector<cplx>& x) {
    const std::size_t n = x.size();
    std::vector<cplx> out(n);
    for (std::size_t k = 0; k < n; ++k) {
        cplx acc{};
        for (std::size_t t = 0; t < n; ++t) {
            const double ph = -2.0 * std::numbers::pi * static_cast<double>((k * t) % n) / static_cast<double>(n);
            acc += x[t] * cplx(std::cos(ph), std::sin(ph));
        }
        out[k] = acc;
    }
    return out;
}

// |DFT| with zero Doppler moved to index n/2
inline std::vector<double> centered_spectrum(const std::vector<cplx>& x) {
    const auto X = dft(x);
    const std::size_t n = x.size();
    std::vector<double> a(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t k = (i + n - n / 2) % n;
        a[i] = std::abs(X[k]);
    }
    return a;
}

inline std::vector<double> hamming(std::size_t len) {
    std::vector<double> w(len);
    for (std::size_t i = 0; i < len; ++i) {
        w[i] = len == 1 ? 1.0 : 0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * double(i) / double(len - 1));
    }
    double s = 0.0;
    for (double v : w) s += v;
    for (double& v : w) v /= s;
    return w;
}

// Direct evaluation of the double sum, both lag signs, explicit exponentials.
struct Map {
    std::vector<std::vector<double>> v;  // [t][f]
};

inline Map spwvd(const std::vector<cplx>& x, std::size_t g_len, std::size_t h_len, std::size_t stride) {
    const long n = static_cast<long>(x.size());
    const long lg = static_cast<long>(g_len / 2), lh = static_cast<long>(h_len / 2);
    const auto g = hamming(g_len), h = hamming(h_len);
    auto at = [&](long i) { return (i < 0 || i >= n) ? cplx{} : x[static_cast<std::size_t>(i)]; };
    Map m;
    double peak = 0.0;
    for (long t = 0; t < n; t += static_cast<long>(stride)) {
        std::vector<cplx> r(static_cast<std::size_t>(2 * lh + 1));
        for (long tau = -lh; tau <= lh; ++tau) {
            cplx s{};
            for (long u = -lg; u <= lg; ++u) s += g[static_cast<std::size_t>(u + lg)] * at(t + u + tau) * std::conj(at(t + u - tau));
            r[static_cast<std::size_t>(tau + lh)] = h[static_cast<std::size_t>(tau + lh)] * s;
        }
        std::vector<double> row(static_cast<std::size_t>(n));
        for (long f = 0; f < n; ++f) {
            cplx acc{};
            for (long tau = -lh; tau <= lh; ++tau) {
                const double ph = -2.0 * std::numbers::pi * double(f) * double(2 * tau) / double(2 * n);
                acc += r[static_cast<std::size_t>(tau + lh)] * cplx(std::cos(ph), std::sin(ph));
            }
            row[static_cast<std::size_t>(f)] = std::abs(acc);
            peak = std::max(peak, row[static_cast<std::size_t>(f)]);
        }
        m.v.push_back(std::move(row));
    }
    if (peak > 0.0) {
        for (auto& row : m.v) {
            for (double& e : row) e /= peak;
        }
    }
    return m;
}

inline double ridge(const Map& m) {
    double s = 0.0;
    for (const auto& row : m.v) s += *std::max_element(row.begin(), row.end());
    return s;
}

// Union-find labeling of the >= quantile mask.
inline std::pair<std::size_t, std::size_t> regions(const Map& m, double q) {
    std::vector<double> pos;
    for (const auto& row : m.v) {
        for (double e : row) {
            if (e > 0.0) pos.push_back(e);
        }
    }
    if (pos.empty()) return {0, 0};
    std::sort(pos.begin(), pos.end());
    const double p = q * double(pos.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(p);
    const std::size_t hi = std::min(lo + 1, pos.size() - 1);
    const double thr = pos[lo] * (1.0 - (p - double(lo))) + pos[hi] * (p - double(lo));
    const std::size_t R = m.v.size(), C = m.v[0].size();
    std::vector<std::size_t> parent(R * C);
    std::iota(parent.begin(), parent.end(), 0);
    auto find = [&](std::size_t a) {
        while (parent[a] != a) a = parent[a] = parent[parent[a]];
        return a;
    };
    auto on = [&](std::size_t r, std::size_t c) { return m.v[r][c] > 0.0 && m.v[r][c] >= thr; };
    for (std::size_t r = 0; r < R; ++r) {
        for (std::size_t c = 0; c < C; ++c) {
            if (!on(r, c)) continue;
            for (long dr = 0; dr <= 1; ++dr) {
                for (long dc = -1; dc <= 1; ++dc) {
                    if (dr == 0 && dc <= 0) continue;
                    const long rr = long(r) + dr, cc = long(c) + dc;
                    if (rr >= long(R) || cc < 0 || cc >= long(C) || !on(std::size_t(rr), std::size_t(cc))) continue;
                    parent[find(r * C + c)] = find(std::size_t(rr) * C + std::size_t(cc));
                }
            }
        }
    }
    std::vector<std::size_t> size(R * C, 0);
    for (std::size_t r = 0; r < R; ++r) {
        for (std::size_t c = 0; c < C; ++c) {
            if (on(r, c)) ++size[find(r * C + c)];
        }
    }
    std::size_t nr = 0, ms = 0;
    for (std::size_t s : size) {
        if (s) {
            ++nr;
            ms = std::max(ms, s);
        }
    }
    return {nr, ms};
}

inline double entropy(const std::vector<double>& a) {
    double tot = 0.0;
    for (double v : a) tot += v;
    double h = 0.0;
    for (double v : a) {
        if (v > 0.0) h -= (v / tot) * std::log(v / tot);
    }
    return h;
}

// Reduced fraction; doubles built from it are correctly rounded quotients.
struct Ratio {
    std::uint64_t num = 0;
    std::uint64_t den = 1;

    Ratio(std::uint64_t n, std::uint64_t d) : num(n), den(d) {
        if (den == 0) {
            num = 0;
            den = 1;
        }
        const std::uint64_t g = std::gcd(num, den);
        if (g > 1) {
            num /= g;
            den /= g;
        }
    }
    Ratio operator+(const Ratio& o) const { return {num * o.den + o.num * den, den * o.den}; }
    Ratio operator-(const Ratio& o) const { return {num * o.den - o.num * den, den * o.den}; }
    Ratio operator*(const Ratio& o) const { return {num * o.num, den * o.den}; }
    bool operator<(const Ratio& o) const { return num * o.den < o.num * den; }
    Ratio half() const { return {num, den * 2}; }
    double value() const { return double(num) / double(den); }
};

inline double impurity(const std::vector<int>& labels) {
    if (labels.empty()) return 0.0;
    std::vector<double> counts;
    for (int l : labels) {
        if (l >= int(counts.size())) counts.resize(std::size_t(l) + 1, 0.0);
        counts[std::size_t(l)] += 1.0;
    }
    double s = 0.0;
    for (double c : counts) s += (c / double(labels.size())) * (c / double(labels.size()));
    return 1.0 - s;
}

struct GiniBest {
    double delta = 0.0;
    double threshold = 0.0;
};

// 1 - sum (c/n)^2 as an exact fraction.
inline Ratio impurity_ratio(const std::vector<int>& labels) {
    if (labels.empty()) return {0, 1};
    std::vector<std::uint64_t> counts;
    for (int l : labels) {
        if (l >= int(counts.size())) counts.resize(std::size_t(l) + 1, 0);
        ++counts[std::size_t(l)];
    }
    Ratio s{0, 1};
    for (auto c : counts) s = s + Ratio(c, labels.size()) * Ratio(c, labels.size());
    return Ratio(1, 1) - s;
}

// Every midpoint of consecutive distinct values in exact arithmetic, first maximum kept.
inline GiniBest best_gini(const std::vector<double>& v, const std::vector<int>& y) {
    std::vector<double> d = v;
    std::sort(d.begin(), d.end());
    d.erase(std::unique(d.begin(), d.end()), d.end());
    const Ratio parent = impurity_ratio(y);
    GiniBest best{0.0, d.front()};
    Ratio best_delta{0, 1};
    bool any = false;
    for (std::size_t i = 0; i + 1 < d.size(); ++i) {
        const double thr = 0.5 * (d[i] + d[i + 1]);
        std::vector<int> l, r;
        for (std::size_t k = 0; k < v.size(); ++k) (v[k] <= thr ? l : r).push_back(y[k]);
        const Ratio child = Ratio(l.size(), v.size()) * impurity_ratio(l) + Ratio(r.size(), v.size()) * impurity_ratio(r);
        const Ratio delta = parent - child;
        if (!any || best_delta < delta) {
            best_delta = delta;
            best = {delta.value(), thr};
            any = true;
        }
    }
    return best;
}

// Rows of z are normalized here; plain exp/log without stabilization.
inline double supcon(std::vector<std::vector<double>> z, const std::vector<int>& y, double t, bool negatives_only = false) {
    for (auto& row : z) {
        double n = 0.0;
        for (double e : row) n += e * e;
        n = std::sqrt(n);
        for (double& e : row) e /= n;
    }
    auto dot = [&](std::size_t i, std::size_t j) {
        double s = 0.0;
        for (std::size_t k = 0; k < z[i].size(); ++k) s += z[i][k] * z[j][k];
        return s;
    };
    const std::size_t B = z.size();
    double loss = 0.0;
    for (std::size_t i = 0; i < B; ++i) {
        double denom = 0.0;
        for (std::size_t a = 0; a < B; ++a) {
            if (a == i || (negatives_only && y[a] == y[i])) continue;
            denom += std::exp(dot(i, a) / t);
        }
        std::size_t np = 0;
        double inner = 0.0;
        for (std::size_t p = 0; p < B; ++p) {
            if (p == i || y[p] != y[i]) continue;
            ++np;
            inner += std::log(std::exp(dot(i, p) / t) / denom);
        }
        if (np && denom > 0.0) loss -= inner / double(np);
    }
    return loss;
}

inline double align(const std::vector<std::vector<double>>& s, const std::vector<std::vector<double>>& d) {
    const std::size_t n = s.size();
    auto dot = [](const std::vector<double>& a, const std::vector<double>& b) {
        double r = 0.0;
        for (std::size_t k = 0; k < a.size(); ++k) r += a[k] * b[k];
        return r;
    };
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double den1 = 0.0, den2 = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            den1 += std::exp(dot(s[i], d[j]));
            den2 += std::exp(dot(d[i], s[j]));
        }
        acc += std::log(std::exp(dot(s[i], d[i])) / den1) + std::log(std::exp(dot(d[i], s[i])) / den2);
    }
    return -acc / (2.0 * double(n));
}

// (B,Cin,L) * (Cout,Cin,K) with zero padding
inline std::vector<double> conv1d(const std::vector<double>& x, const std::vector<double>& w, const std::vector<double>& b,
                                  std::size_t B, std::size_t Cin, std::size_t L, std::size_t Cout, std::size_t K,
                                  std::size_t stride, std::size_t pad) {
    const std::size_t Lout = (L + 2 * pad - K) / stride + 1;
    std::vector<double> y(B * Cout * Lout, 0.0);
    for (std::size_t n = 0; n < B; ++n) {
        for (std::size_t o = 0; o < Cout; ++o) {
            for (std::size_t l = 0; l < Lout; ++l) {
                double acc = b.empty() ? 0.0 : b[o];
                for (std::size_t c = 0; c < Cin; ++c) {
                    for (std::size_t k = 0; k < K; ++k) {
                        const long pos = long(l * stride + k) - long(pad);
                        if (pos < 0 || pos >= long(L)) continue;
                        acc += w[(o * Cin + c) * K + k] * x[(n * Cin + c) * L + std::size_t(pos)];
                    }
                }
                y[(n * Cout + o) * Lout + l] = acc;
            }
        }
    }
    return y;
}


struct Metrics {
    Ratio accuracy, precision, recall, pfa, miou;
};

inline Metrics metrics(std::uint64_t tp, std::uint64_t fn, std::uint64_t fp, std::uint64_t tn) {
    return {Ratio(tp + tn, tp + fn + fp + tn), Ratio(tp, tp + fp), Ratio(tp, tp + fn), Ratio(fp, fp + tn),
            (Ratio(tp, tp + fn + fp) + Ratio(tn, tn + fn + fp)).half()};
}

inline std::vector<cplx> tone(std::size_t n, double bin, double amp = 1.0) {
    std::vector<cplx> x(n);
    for (std::size_t k = 0; k < n; ++k) {
        const double ph = 2.0 * std::numbers::pi * bin * double(k) / double(n);
        x[k] = amp * cplx(std::cos(ph), std::sin(ph));
    }
    return x;
}

inline std::vector<cplx> noise(std::size_t n, std::mt19937_64& rng, double sigma = 1.0) {
    std::normal_distribution<double> nd(0.0, sigma);
    std::vector<cplx> x(n);
    for (auto& v : x) v = cplx(nd(rng), nd(rng));
    return x;
}

}  // namespace oracle
