#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

#include "mdfg/dataio.hpp"

namespace mdfg::features {

inline constexpr std::size_t kNumFeatures = 6;
using FeatureArray = std::array<double, kNumFeatures>;

inline constexpr std::array<const char*, kNumFeatures> kFeatureNames = {"raa", "rdph", "rve", "ri", "nr", "ms"};

// Guards the entropy division when the Doppler spectrum is a single line.
inline constexpr double kEntropyFloor = 1e-6;

struct FeatureConfig {
    std::size_t g_len = 33;  // time smoothing window
    std::size_t h_len = 127; // lag window
    std::size_t time_stride = 4;
    double quantile_q = 0.8;

    void validate(std::size_t seg_len) const;
};

/// Clutter reference that makes RAA/RDPH/RVE relative, plus min-max bounds.
struct ReferenceStats {
    double mean_amp = 1.0;
    double mean_peak = 1.0;
    double mean_entropy = 1.0;
    FeatureArray feat_min{};
    FeatureArray feat_max{};
};

struct ShallowFeatureVector {
    double f_raa = 0.0;
    double f_rdph = 0.0;
    double f_rve = 0.0;
    double f_ri = 0.0;
    double f_nr = 0.0;
    double f_ms = 0.0;

    FeatureArray as_array() const { return {f_raa, f_rdph, f_rve, f_ri, f_nr, f_ms}; }
    static ShallowFeatureVector from_array(const FeatureArray& a) { return {a[0], a[1], a[2], a[3], a[4], a[5]}; }
};

// Row-major T x F grid; row t is the slice at time t * time_stride.
struct TFMap {
    std::vector<double> values;
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::size_t time_stride = 1;

    double at(std::size_t t, std::size_t f) const { return values[t * cols + f]; }
};

double raa(std::span<const cplx> seg, const ReferenceStats& ref);

/// |DFT| with zero Doppler at index N/2.
RVec doppler_spectrum(std::span<const cplx> seg);

double rdph(std::span<const double> spectrum, const ReferenceStats& ref);

// Shannon entropy (nats) of the spectrum treated as a distribution.
double spectral_entropy(std::span<const double> spectrum);

/// ref.mean_entropy / H, so concentrated (target-like) spectra score high.
double rve(std::span<const double> spectrum, const ReferenceStats& ref);

/// Smoothed pseudo Wigner-Ville distribution, magnitude normalized to max 1.
///
/// W(t,f) = | sum_tau h(tau) [sum_u g(u) x(t+u+tau) x*(t+u-tau)] exp(-j 2 pi f (2 tau) / (2N)) |
///
/// Frequency bin f corresponds to f / (2N) cycles per sample, so a tone at Doppler
/// DFT bin m sits at map bin (2m mod N); see tf_bin_for_doppler_bin.
TFMap spwvd(std::span<const cplx> seg, std::size_t g_len, std::size_t h_len, std::size_t time_stride);

std::size_t tf_bin_for_doppler_bin(std::size_t m, std::size_t seg_len);

// Normalized symmetric Hamming window (unit sum).
RVec hamming_unit_sum(std::size_t len);

double ridge_integral(const TFMap& map);

struct RegionStats {
    std::size_t nr = 0;
    std::size_t ms = 0;
};

/// Keeps entries >= the q-quantile (linear interpolation) of the strictly positive
/// entries and counts 8-connected components.
RegionStats connected_regions(const TFMap& map, double quantile_q);

// Reference-free quantities from which the raw features follow.
struct SegmentStats {
    double mean_amp = 0.0;
    double peak = 0.0;
    double entropy = 0.0;
    double ri = 0.0;
    double nr = 0.0;
    double ms = 0.0;
};

SegmentStats segment_stats(std::span<const cplx> seg, const FeatureConfig& cfg);
FeatureArray raw_from_stats(const SegmentStats& st, const ReferenceStats& ref);
FeatureArray raw_features(std::span<const cplx> seg, const ReferenceStats& ref, const FeatureConfig& cfg);

// Min-max to [0,1] with clamping; a zero-width range maps to 0.
ShallowFeatureVector normalize(const FeatureArray& raw, const ReferenceStats& ref);

ShallowFeatureVector extract_shallow(std::span<const cplx> seg, const ReferenceStats& ref, const FeatureConfig& cfg);

ReferenceStats fit_reference(const std::vector<SegmentStats>& pool);
ReferenceStats fit_reference(const std::vector<dataio::EchoSegment>& clutter_segments, const FeatureConfig& cfg);

}  // namespace mdfg::features
