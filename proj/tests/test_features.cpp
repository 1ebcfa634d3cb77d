#include <algorithm>
#include <cmath>
#include <random>

#include "doctest.h"
#include "mdfg/features.hpp"
#include "oracles.hpp"

using namespace mdfg;
using namespace mdfg::features;

namespace {

TFMap map_of(std::size_t rows, std::size_t cols, std::vector<double> v) {
    TFMap m;
    m.rows = rows;
    m.cols = cols;
    m.values = std::move(v);
    return m;
}

ReferenceStats unit_ref() {
    ReferenceStats r;
    r.feat_min.fill(0.0);
    r.feat_max.fill(1.0);
    return r;
}

// Independent composition of the six raw features.
FeatureArray oracle_raw(const CVec& x, const ReferenceStats& ref, const FeatureConfig& cfg) {
    double amp = 0.0;
    for (const auto& z : x) amp += std::abs(z);
    amp /= double(x.size());
    const auto spec = oracle::centered_spectrum(x);
    const double peak = *std::max_element(spec.begin(), spec.end());
    const double h = oracle::entropy(spec);
    const auto m = oracle::spwvd(x, cfg.g_len, cfg.h_len, cfg.time_stride);
    const auto [nr, ms] = oracle::regions(m, cfg.quantile_q);
    return {amp / ref.mean_amp, peak / ref.mean_peak, ref.mean_entropy / (h > 0 ? h : 1e-6), oracle::ridge(m), double(nr),
            double(ms)};
}

}  // namespace

TEST_CASE("raa") {
    ReferenceStats ref;
    ref.mean_amp = 2.5;
    const CVec constant(16, std::polar(2.5, 0.3));
    CHECK(raa(constant, ref) == doctest::Approx(1.0).epsilon(1e-15));
    ref.mean_amp = 2.0;
    const CVec x{cplx(3, 0), cplx(0, 4), cplx(3, 4)};
    CHECK(raa(x, ref) == doctest::Approx(2.0).epsilon(1e-15));
    CHECK(raa(CVec(8), ref) == 0.0);
}

TEST_CASE("doppler spectrum") {
    const std::size_t n = 64;
    for (int m : {0, 3, -5, 31}) {
        const auto spec = doppler_spectrum(oracle::tone(n, m));
        const std::size_t at = std::size_t(int(n / 2) + m);
        for (std::size_t i = 0; i < n; ++i) {
            CHECK(spec[i] == doctest::Approx(i == at ? double(n) : 0.0).epsilon(1e-9).scale(double(n)));
        }
    }
    const auto zero = doppler_spectrum(CVec(n));
    CHECK(std::all_of(zero.begin(), zero.end(), [](double v) { return v == 0.0; }));

    std::mt19937_64 rng(1);
    const auto x = oracle::noise(n, rng);
    const auto spec = doppler_spectrum(x);
    const auto ref = oracle::centered_spectrum(x);
    double lhs = 0.0, rhs = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        lhs += spec[i] * spec[i];
        rhs += std::norm(x[i]);
        CHECK(spec[i] == doctest::Approx(ref[i]).epsilon(1e-10));
    }
    CHECK(std::abs(lhs - double(n) * rhs) <= 1e-9 * lhs);
}

TEST_CASE("rdph and rve") {
    ReferenceStats ref;
    ref.mean_peak = 512;
    CHECK(rdph(doppler_spectrum(oracle::tone(512, 7)), ref) == doctest::Approx(1.0).epsilon(1e-12));
    ref.mean_peak = 2;
    const RVec s{1, 5, 2};
    CHECK(rdph(s, ref) == 2.5);
    CHECK(rdph(RVec(4, 0.0), ref) == 0.0);

    ref.mean_entropy = std::log(10.0);
    CHECK(rve(RVec(10, 3.0), ref) == doctest::Approx(1.0).epsilon(1e-14));
    ref.mean_entropy = 0.7;
    CHECK(rve(RVec{0, 0, 4, 0}, ref) == doctest::Approx(0.7 / kEntropyFloor));
    const double h = -(0.25 * std::log(0.25) * 2 + 0.5 * std::log(0.5));
    CHECK(h == doctest::Approx(1.0397).epsilon(1e-4));
    ref.mean_entropy = h;
    CHECK(rve(RVec{1, 1, 2}, ref) == doctest::Approx(1.0).epsilon(1e-14));
    try {
        rve(RVec(5, 0.0), ref);
        FAIL("expected AllZeroSpectrum");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::AllZeroSpectrum);
    }
}

TEST_CASE("amplitude scaling covariance and time reversal") {
    std::mt19937_64 rng(8);
    auto x = oracle::noise(128, rng);
    for (std::size_t k = 0; k < x.size(); ++k) x[k] += oracle::tone(128, 9, 3.0)[k];
    ReferenceStats ref;
    ref.mean_amp = 1.3;
    ref.mean_peak = 40.0;
    ref.mean_entropy = 4.0;
    CVec y = x;
    for (auto& v : y) v *= 3.5;
    const auto sx = doppler_spectrum(x), sy = doppler_spectrum(y);
    CHECK(raa(y, ref) == doctest::Approx(3.5 * raa(x, ref)).epsilon(1e-13));
    CHECK(rdph(sy, ref) == doctest::Approx(3.5 * rdph(sx, ref)).epsilon(1e-13));
    CHECK(rve(sy, ref) == doctest::Approx(rve(sx, ref)).epsilon(1e-13));

    CVec r(x.size());
    for (std::size_t k = 0; k < x.size(); ++k) r[k] = std::conj(x[x.size() - 1 - k]);
    const auto sr = doppler_spectrum(r);
    for (std::size_t i = 0; i < sx.size(); ++i) CHECK(sr[i] == doctest::Approx(sx[i]).epsilon(1e-12));
    CHECK(rve(sr, ref) == doctest::Approx(rve(sx, ref)).epsilon(1e-13));
    CHECK(rdph(sr, ref) == doctest::Approx(rdph(sx, ref)).epsilon(1e-13));
}

TEST_CASE("spwvd of a tone concentrates on its bin") {
    const std::size_t n = 512;
    for (std::size_t m : {5u, 40u, 100u, 200u}) {
        const auto map = spwvd(oracle::tone(n, double(m)), 33, 127, 4);
        CHECK(map.cols == n);
        CHECK(map.rows == n / 4);
        CHECK(*std::max_element(map.values.begin(), map.values.end()) == 1.0);
        const std::size_t expect = tf_bin_for_doppler_bin(m, n);
        for (std::size_t t = 16; t + 16 < map.rows; ++t) {
            const double* row = map.values.data() + t * map.cols;
            CHECK(std::size_t(std::max_element(row, row + map.cols) - row) == expect);
        }
    }
}

TEST_CASE("spwvd matches the direct double sum") {
    std::mt19937_64 rng(21);
    const auto x = oracle::noise(64, rng);
    const auto map = spwvd(x, 9, 31, 3);
    const auto ref = oracle::spwvd(x, 9, 31, 3);
    REQUIRE(map.rows == ref.v.size());
    for (std::size_t t = 0; t < map.rows; ++t) {
        for (std::size_t f = 0; f < map.cols; ++f) CHECK(std::abs(map.at(t, f) - ref.v[t][f]) <= 1e-12);
    }
    const auto zero = spwvd(CVec(64), 9, 31, 3);
    CHECK(std::all_of(zero.values.begin(), zero.values.end(), [](double v) { return v == 0.0; }));
    CHECK_THROWS_AS(spwvd(x, 8, 31, 3), Error);
    CHECK_THROWS_AS(spwvd(x, 9, 65, 3), Error);
}

TEST_CASE("spwvd suppresses the cross term between two tones") {
    const std::size_t n = 128;
    auto x = oracle::tone(n, 10);
    const auto y = oracle::tone(n, 40);
    for (std::size_t k = 0; k < n; ++k) x[k] += y[k];
    const auto map = spwvd(x, 33, 127, 1);
    const std::size_t b1 = tf_bin_for_doppler_bin(10, n), b2 = tf_bin_for_doppler_bin(40, n), mid = (b1 + b2) / 2;
    double ridge1 = 0, ridge2 = 0, cross = 0;
    for (std::size_t t = 0; t < map.rows; ++t) {
        ridge1 = std::max(ridge1, map.at(t, b1));
        ridge2 = std::max(ridge2, map.at(t, b2));
        cross = std::max(cross, map.at(t, mid));
    }
    CHECK(ridge1 > 0.9);
    CHECK(ridge2 > 0.9);
    CHECK(cross < 0.5 * std::max(ridge1, ridge2));
}

TEST_CASE("ridge integral") {
    CHECK(ridge_integral(map_of(3, 2, {1, 0, 0, 1, 1, 1})) == 3.0);
    CHECK(ridge_integral(map_of(2, 2, {0.2, 0.8, 0.5, 0.1})) == doctest::Approx(1.3).epsilon(1e-15));
    CHECK(ridge_integral(map_of(2, 2, {0, 0, 0, 0})) == 0.0);
}

TEST_CASE("connected regions") {
    // two 3-pixel blobs
    std::vector<double> v(6 * 6, 0.0);
    for (auto [r, c] : std::initializer_list<std::pair<int, int>>{{0, 0}, {0, 1}, {1, 1}, {4, 4}, {5, 4}, {5, 5}}) v[std::size_t(r * 6 + c)] = 1.0;
    const auto rs = connected_regions(map_of(6, 6, v), 0.5);
    CHECK(rs.nr == 2);
    CHECK(rs.ms == 3);
    const auto none = connected_regions(map_of(2, 2, {0, 0, 0, 0}), 0.5);
    CHECK(none.nr == 0);
    CHECK(none.ms == 0);
    CHECK_THROWS_AS(connected_regions(map_of(1, 1, {1}), 1.0), Error);

    const auto tone_map = spwvd(oracle::tone(512, 37), 33, 127, 4);
    // with the cut inside the ridge a tone leaves one region
    CHECK(connected_regions(tone_map, 0.99).nr == 1);
}

TEST_CASE("connected regions agree with union-find labeling") {
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 30; ++trial) {
        const std::size_t rows = 5 + std::size_t(trial % 7), cols = 6 + std::size_t(trial % 5);
        oracle::Map m;
        std::vector<double> flat;
        for (std::size_t r = 0; r < rows; ++r) {
            std::vector<double> row;
            for (std::size_t c = 0; c < cols; ++c) row.push_back(u(rng) < 0.2 ? 0.0 : u(rng));
            flat.insert(flat.end(), row.begin(), row.end());
            m.v.push_back(row);
        }
        const double q = 0.3 + 0.05 * (trial % 10);
        const auto got = connected_regions(map_of(rows, cols, flat), q);
        const auto [nr, ms] = oracle::regions(m, q);
        CHECK(got.nr == nr);
        CHECK(got.ms == ms);
        CHECK(got.ms <= rows * cols);
    }
}

TEST_CASE("extract_shallow matches the oracle on a tone in noise") {
    std::mt19937_64 rng(2024);
    auto x = oracle::noise(512, rng, 0.7);
    const auto t = oracle::tone(512, 61.3, 2.0);
    for (std::size_t k = 0; k < x.size(); ++k) x[k] += t[k];
    FeatureConfig cfg;
    ReferenceStats ref;
    ref.mean_amp = 1.1;
    ref.mean_peak = 300.0;
    ref.mean_entropy = 5.0;
    ref.feat_min = {0.5, 0.5, 0.5, 10, 1, 10};
    ref.feat_max = {3.0, 4.0, 2.0, 120, 30, 4000};
    const auto got = raw_features(x, ref, cfg);
    const auto want = oracle_raw(x, ref, cfg);
    for (std::size_t i = 0; i < kNumFeatures; ++i) CHECK(std::abs(got[i] - want[i]) <= 1e-9 * std::max(1.0, std::abs(want[i])));
    const auto norm = extract_shallow(x, ref, cfg).as_array();
    for (std::size_t i = 0; i < kNumFeatures; ++i) {
        const double w = std::clamp((want[i] - ref.feat_min[i]) / (ref.feat_max[i] - ref.feat_min[i]), 0.0, 1.0);
        CHECK(std::abs(norm[i] - w) <= 1e-9);
    }
}

TEST_CASE("extract_shallow matches the oracle on 100 random segments") {
    std::mt19937_64 rng(77);
    FeatureConfig cfg;
    cfg.g_len = 15;
    cfg.h_len = 31;
    cfg.time_stride = 2;
    ReferenceStats ref;
    ref.mean_amp = 1.0;
    ref.mean_peak = 20.0;
    ref.mean_entropy = 4.0;
    ref.feat_min = {0.2, 0.2, 0.5, 5, 1, 5};
    ref.feat_max = {2.0, 3.0, 1.5, 60, 40, 400};
    std::uniform_real_distribution<double> u(0.0, 64.0);
    for (int s = 0; s < 100; ++s) {
        auto x = oracle::noise(128, rng);
        if (s % 2) {
            const auto t = oracle::tone(128, u(rng), 1.5);
            for (std::size_t k = 0; k < x.size(); ++k) x[k] += t[k];
        }
        const auto got = raw_features(x, ref, cfg);
        const auto want = oracle_raw(x, ref, cfg);
        for (std::size_t i = 0; i < kNumFeatures; ++i) {
            CHECK(std::abs(got[i] - want[i]) <= 1e-9 * std::max(1.0, std::abs(want[i])));
        }
    }
}

TEST_CASE("normalize clamps and handles zero-width ranges") {
    ReferenceStats ref = unit_ref();
    ref.feat_max[0] = 2.0;
    ref.feat_min[5] = ref.feat_max[5] = 4.0;
    const auto out = normalize({5.0, 0.5, -1.0, 1.0, 0.0, 4.0}, ref).as_array();
    CHECK(out[0] == 1.0);
    CHECK(out[1] == 0.5);
    CHECK(out[2] == 0.0);
    CHECK(out[3] == 1.0);
    CHECK(out[5] == 0.0);
    CHECK(normalize({0, 0, 0, 0, 0, 5.0}, ref).f_ms == 1.0);
}

TEST_CASE("fit_reference") {
    std::mt19937_64 rng(12);
    FeatureConfig cfg;
    cfg.g_len = 9;
    cfg.h_len = 31;
    cfg.time_stride = 4;
    std::vector<dataio::EchoSegment> pool;
    for (int i = 0; i < 100; ++i) {
        dataio::EchoSegment s;
        s.samples = oracle::noise(64, rng, 0.5 + 0.01 * i);
        pool.push_back(s);
    }
    const auto one = fit_reference({pool[0]}, cfg);
    const auto raw0 = raw_features(pool[0].samples, one, cfg);
    for (std::size_t i = 0; i < kNumFeatures; ++i) {
        CHECK(one.feat_min[i] == one.feat_max[i]);
        CHECK(one.feat_min[i] == raw0[i]);
    }
    const auto two = fit_reference({pool[0], pool[0]}, cfg);
    CHECK(two.mean_amp == one.mean_amp);
    CHECK(two.feat_max == one.feat_max);

    const auto ref = fit_reference(pool, cfg);
    for (const auto& s : pool) {
        for (double v : extract_shallow(s.samples, ref, cfg).as_array()) {
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
        }
    }
    try {
        fit_reference(std::vector<dataio::EchoSegment>{}, cfg);
        FAIL("expected EmptyPool");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::EmptyPool);
    }
}
