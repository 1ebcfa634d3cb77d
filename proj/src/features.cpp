#include "mdfg/features.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <numeric>

#include "mdfg/fft.hpp"

namespace mdfg::features {

namespace {

Fft& fft_for(std::size_t n) {
    thread_local std::map<std::size_t, Fft> cache;
    auto it = cache.find(n);
    if (it == cache.end()) it = cache.emplace(n, Fft(n)).first;
    return it->second;
}

}  // namespace

void FeatureConfig::validate(std::size_t seg_len) const {
    if (g_len % 2 == 0 || h_len % 2 == 0) throw Error(ErrorCode::InvalidArgument, "g_len and h_len must be odd");
    if (h_len > seg_len) throw Error(ErrorCode::InvalidArgument, "h_len must not exceed seg_len");
    if (time_stride == 0) throw Error(ErrorCode::InvalidArgument, "time_stride must be positive");
    if (!(quantile_q > 0.0 && quantile_q < 1.0)) throw Error(ErrorCode::InvalidArgument, "quantile_q must lie in (0,1)");
}

double raa(std::span<const cplx> seg, const ReferenceStats& ref) {
    if (seg.empty()) return 0.0;
    double acc = 0.0;
    for (const auto& z : seg) acc += std::abs(z);
    return acc / static_cast<double>(seg.size()) / ref.mean_amp;
}

RVec doppler_spectrum(std::span<const cplx> seg) {
    const std::size_t n = seg.size();
    RVec out(n, 0.0);
    if (n == 0) return out;
    CVec spec(n);
    fft_for(n).forward(seg, spec);
    for (std::size_t i = 0; i < n; ++i) out[i] = std::abs(spec[(i + n - n / 2) % n]);
    return out;
}

double rdph(std::span<const double> spectrum, const ReferenceStats& ref) {
    if (spectrum.empty()) return 0.0;
    return *std::max_element(spectrum.begin(), spectrum.end()) / ref.mean_peak;
}

double spectral_entropy(std::span<const double> spectrum) {
    const double total = std::accumulate(spectrum.begin(), spectrum.end(), 0.0);
    if (!(total > 0.0)) throw Error(ErrorCode::AllZeroSpectrum, "spectrum sums to zero");
    double h = 0.0;
    for (double a : spectrum) {
        if (a <= 0.0) continue;
        const double p = a / total;
        h -= p * std::log(p);
    }
    return h;
}

double rve(std::span<const double> spectrum, const ReferenceStats& ref) {
    const double h = spectral_entropy(spectrum);
    return ref.mean_entropy / (h > 0.0 ? h : kEntropyFloor);
}

RVec hamming_unit_sum(std::size_t len) {
    RVec w(len, 1.0);
    if (len > 1) {
        for (std::size_t i = 0; i < len; ++i) {
            w[i] = 0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(len - 1));
        }
    }
    const double s = std::accumulate(w.begin(), w.end(), 0.0);
    for (auto& v : w) v /= s;
    return w;
}

std::size_t tf_bin_for_doppler_bin(std::size_t m, std::size_t seg_len) { return (2 * m) % seg_len; }

TFMap spwvd(std::span<const cplx> seg, std::size_t g_len, std::size_t h_len, std::size_t time_stride) {
    const std::size_t n = seg.size();
    if (g_len % 2 == 0 || h_len % 2 == 0) throw Error(ErrorCode::InvalidArgument, "g_len and h_len must be odd");
    if (h_len > n) throw Error(ErrorCode::InvalidArgument, "h_len must not exceed the segment length");
    if (time_stride == 0) throw Error(ErrorCode::InvalidArgument, "time_stride must be positive");

    const auto lg = static_cast<std::ptrdiff_t>((g_len - 1) / 2);
    const auto lh = static_cast<std::ptrdiff_t>((h_len - 1) / 2);
    const RVec g = hamming_unit_sum(g_len);
    const RVec h = hamming_unit_sum(h_len);

    // zero padding so every x(t+u±tau) index is in range
    const std::ptrdiff_t pad = lg + lh + 1;
    CVec xp(n + 2 * static_cast<std::size_t>(pad), cplx{});
    std::copy(seg.begin(), seg.end(), xp.begin() + pad);

    TFMap map;
    map.cols = n;
    map.rows = (n + time_stride - 1) / time_stride;
    map.time_stride = time_stride;
    map.values.assign(map.rows * map.cols, 0.0);

    Fft& fft = fft_for(n);
    CVec kernel(n), spec(n);
    for (std::size_t row = 0; row < map.rows; ++row) {
        const auto t = static_cast<std::ptrdiff_t>(row * time_stride);
        std::fill(kernel.begin(), kernel.end(), cplx{});
        // s(-tau) = conj(s(tau)) since g is real
        for (std::ptrdiff_t tau = 0; tau <= lh; ++tau) {
            cplx s{};
            for (std::ptrdiff_t u = -lg; u <= lg; ++u) {
                const std::ptrdiff_t c = pad + t + u;
                s += g[static_cast<std::size_t>(u + lg)] * xp[static_cast<std::size_t>(c + tau)] *
                     std::conj(xp[static_cast<std::size_t>(c - tau)]);
            }
            const double hw = h[static_cast<std::size_t>(tau + lh)];
            kernel[static_cast<std::size_t>(tau)] = hw * s;
            if (tau > 0) kernel[n - static_cast<std::size_t>(tau)] = hw * std::conj(s);
        }
        fft.forward(kernel, spec);
        double* dst = map.values.data() + row * map.cols;
        for (std::size_t f = 0; f < n; ++f) dst[f] = std::abs(spec[f]);
    }

    const double peak = map.values.empty() ? 0.0 : *std::max_element(map.values.begin(), map.values.end());
    if (peak > 0.0) {
        for (auto& v : map.values) v /= peak;
    }
    return map;
}

double ridge_integral(const TFMap& map) {
    double acc = 0.0;
    for (std::size_t t = 0; t < map.rows; ++t) {
        const double* row = map.values.data() + t * map.cols;
        acc += *std::max_element(row, row + map.cols);
    }
    return acc;
}

RegionStats connected_regions(const TFMap& map, double quantile_q) {
    if (!(quantile_q > 0.0 && quantile_q < 1.0)) throw Error(ErrorCode::InvalidArgument, "quantile_q must lie in (0,1)");
    RVec positive;
    for (double v : map.values) {
        if (v > 0.0) positive.push_back(v);
    }
    if (positive.empty()) return {};
    std::sort(positive.begin(), positive.end());
    const double pos = quantile_q * static_cast<double>(positive.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, positive.size() - 1);
    const double threshold = positive[lo] + (pos - static_cast<double>(lo)) * (positive[hi] - positive[lo]);

    const std::size_t rows = map.rows, cols = map.cols;
    std::vector<std::uint8_t> alive(map.values.size());
    for (std::size_t i = 0; i < alive.size(); ++i) alive[i] = map.values[i] > 0.0 && map.values[i] >= threshold;

    RegionStats out;
    std::vector<std::size_t> stack;
    for (std::size_t start = 0; start < alive.size(); ++start) {
        if (!alive[start]) continue;
        alive[start] = 0;
        stack.push_back(start);
        std::size_t size = 0;
        while (!stack.empty()) {
            const std::size_t cur = stack.back();
            stack.pop_back();
            ++size;
            const std::size_t r = cur / cols, c = cur % cols;
            for (int dr = -1; dr <= 1; ++dr) {
                for (int dc = -1; dc <= 1; ++dc) {
                    if (dr == 0 && dc == 0) continue;
                    const auto nr = static_cast<std::ptrdiff_t>(r) + dr;
                    const auto nc = static_cast<std::ptrdiff_t>(c) + dc;
                    if (nr < 0 || nc < 0 || nr >= static_cast<std::ptrdiff_t>(rows) ||
                        nc >= static_cast<std::ptrdiff_t>(cols)) {
                        continue;
                    }
                    const std::size_t idx = static_cast<std::size_t>(nr) * cols + static_cast<std::size_t>(nc);
                    if (alive[idx]) {
                        alive[idx] = 0;
                        stack.push_back(idx);
                    }
                }
            }
        }
        ++out.nr;
        out.ms = std::max(out.ms, size);
    }
    return out;
}

SegmentStats segment_stats(std::span<const cplx> seg, const FeatureConfig& cfg) {
    cfg.validate(seg.size());
    SegmentStats st;
    const ReferenceStats unit;  // all-ones reference yields the plain statistics
    st.mean_amp = raa(seg, unit);
    const RVec spec = doppler_spectrum(seg);
    st.peak = rdph(spec, unit);
    st.entropy = spectral_entropy(spec);
    const TFMap map = spwvd(seg, cfg.g_len, cfg.h_len, cfg.time_stride);
    st.ri = ridge_integral(map);
    const RegionStats rs = connected_regions(map, cfg.quantile_q);
    st.nr = static_cast<double>(rs.nr);
    st.ms = static_cast<double>(rs.ms);
    return st;
}

FeatureArray raw_from_stats(const SegmentStats& st, const ReferenceStats& ref) {
    return {st.mean_amp / ref.mean_amp, st.peak / ref.mean_peak,
            ref.mean_entropy / (st.entropy > 0.0 ? st.entropy : kEntropyFloor), st.ri, st.nr, st.ms};
}

FeatureArray raw_features(std::span<const cplx> seg, const ReferenceStats& ref, const FeatureConfig& cfg) {
    return raw_from_stats(segment_stats(seg, cfg), ref);
}

ShallowFeatureVector normalize(const FeatureArray& raw, const ReferenceStats& ref) {
    FeatureArray out{};
    for (std::size_t i = 0; i < kNumFeatures; ++i) {
        const double span = ref.feat_max[i] - ref.feat_min[i];
        if (span > 0.0) {
            out[i] = std::clamp((raw[i] - ref.feat_min[i]) / span, 0.0, 1.0);
        } else {
            out[i] = raw[i] > ref.feat_max[i] ? 1.0 : 0.0;
        }
    }
    return ShallowFeatureVector::from_array(out);
}

ShallowFeatureVector extract_shallow(std::span<const cplx> seg, const ReferenceStats& ref, const FeatureConfig& cfg) {
    return normalize(raw_features(seg, ref, cfg), ref);
}

ReferenceStats fit_reference(const std::vector<SegmentStats>& pool) {
    if (pool.empty()) throw Error(ErrorCode::EmptyPool, "reference pool is empty");
    ReferenceStats ref;
    double amp = 0.0, peak = 0.0, ent = 0.0;
    for (const auto& st : pool) {
        amp += st.mean_amp;
        peak += st.peak;
        ent += st.entropy;
    }
    const auto n = static_cast<double>(pool.size());
    ref.mean_amp = amp / n;
    ref.mean_peak = peak / n;
    ref.mean_entropy = ent / n;
    if (!(ref.mean_amp > 0.0 && ref.mean_peak > 0.0 && ref.mean_entropy > 0.0)) {
        throw Error(ErrorCode::AllZeroSpectrum, "reference pool has zero mean amplitude, peak or entropy");
    }
    ref.feat_min.fill(std::numeric_limits<double>::infinity());
    ref.feat_max.fill(-std::numeric_limits<double>::infinity());
    for (const auto& st : pool) {
        const FeatureArray raw = raw_from_stats(st, ref);
        for (std::size_t i = 0; i < kNumFeatures; ++i) {
            ref.feat_min[i] = std::min(ref.feat_min[i], raw[i]);
            ref.feat_max[i] = std::max(ref.feat_max[i], raw[i]);
        }
    }
    return ref;
}

ReferenceStats fit_reference(const std::vector<dataio::EchoSegment>& clutter_segments, const FeatureConfig& cfg) {
    if (clutter_segments.empty()) throw Error(ErrorCode::EmptyPool, "reference pool is empty");
    std::vector<SegmentStats> pool;
    pool.reserve(clutter_segments.size());
    for (const auto& s : clutter_segments) pool.push_back(segment_stats(s.samples, cfg));
    return fit_reference(pool);
}

}  // namespace mdfg::features
