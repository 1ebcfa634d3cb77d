#include <algorithm>
#include <cmath>
#include <map>
#include <random>

#include "doctest.h"
#include "mdfg/augment.hpp"
#include "mdfg/features.hpp"
#include "mdfg/giniweight.hpp"
#include "mdfg/synthgen.hpp"
#include "oracles.hpp"

using namespace mdfg;
using namespace mdfg::augment;

namespace {

std::size_t dominant_bin(const CVec& x) {
    const auto X = oracle::dft(x);
    std::size_t best = 0;
    for (std::size_t k = 1; k < X.size(); ++k) {
        if (std::abs(X[k]) > std::abs(X[best])) best = k;
    }
    return best;
}

}  // namespace

TEST_CASE("rcrs") {
    std::mt19937_64 rng(3);
    const auto x = oracle::noise(512, rng);
    CHECK(rcrs(x, 1.0, 5) == x);
    CHECK(rcrs(x, 1.0, 5, Resample::lanczos) == x);
    for (double f : {0.1, 0.5, 0.7, 0.95}) {
        CHECK(rcrs(x, f, 9).size() == 512);
        CHECK(rcrs(x, f, 9, Resample::lanczos).size() == 512);
    }
    CHECK(rcrs(x, 0.8, 11) == rcrs(x, 0.8, 11));
    CHECK_THROWS_AS(rcrs(x, 0.0, 1), Error);
    CHECK_THROWS_AS(rcrs(x, 1.5, 1), Error);

    // stretching half the window to full length halves the frequency
    for (std::size_t m : {40u, 80u, 120u}) {
        const auto y = rcrs(oracle::tone(512, double(m)), 0.5, 21);
        const long got = long(dominant_bin(y));
        CHECK(std::abs(got - long(m / 2)) <= 1);
    }
}

TEST_CASE("rcrs interpolates I and Q linearly") {
    CVec x(9);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = cplx(double(i), -2.0 * double(i));
    const auto y = rcrs(x, 5.0 / 9.0, 4);
    // a crop of 5 consecutive samples stretched onto 9 points steps by one half
    const double start = y[0].real();
    for (std::size_t i = 0; i < y.size(); ++i) {
        CHECK(y[i].real() == doctest::Approx(start + 0.5 * double(i)));
        CHECK(y[i].imag() == doctest::Approx(-2.0 * (start + 0.5 * double(i))));
    }
}

TEST_CASE("ad") {
    std::mt19937_64 rng(4);
    const auto x = oracle::noise(512, rng, 2.0);
    CHECK(ad(x, kNoDisturbance, 1) == x);
    double sig = 0.0;
    for (const auto& z : x) sig += std::norm(z);
    sig /= 512.0;
    double mean_ratio = 0.0;
    for (std::uint64_t s = 0; s < 40; ++s) {
        const auto y = ad(x, 10.0, s);
        double p = 0.0;
        for (std::size_t i = 0; i < 512; ++i) p += std::norm(y[i] - x[i]);
        mean_ratio += p / 512.0 / (sig / 10.0);
    }
    CHECK(mean_ratio / 40.0 == doctest::Approx(1.0).epsilon(0.05));
    CHECK(ad(x, 10.0, 7) == ad(x, 10.0, 7));
    try {
        ad(CVec(16), 10.0, 1);
        FAIL("expected ZeroPowerInput");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::ZeroPowerInput);
    }
}

TEST_CASE("flip") {
    const CVec x{cplx(1, 1), cplx(2, 0), cplx(3, -1)};
    CHECK(flip(x) == CVec{cplx(3, -1), cplx(2, 0), cplx(1, 1)});
    std::mt19937_64 rng(5);
    const auto y = oracle::noise(257, rng);
    CHECK(flip(flip(y)) == y);

    // |DFT(flip x)|[k] equals |DFT(x)|[-k - 1 mod n] up to a phase; compare the sorted magnitudes
    const auto a = oracle::dft(y), b = oracle::dft(flip(y));
    std::vector<double> ma, mb;
    for (std::size_t k = 0; k < a.size(); ++k) {
        ma.push_back(std::abs(a[k]));
        mb.push_back(std::abs(b[k]));
    }
    std::sort(ma.begin(), ma.end());
    std::sort(mb.begin(), mb.end());
    for (std::size_t k = 0; k < ma.size(); ++k) CHECK(ma[k] == doctest::Approx(mb[k]).epsilon(1e-10));
}

TEST_CASE("modulus") {
    CHECK(modulus(CVec{cplx(3, 4)})[0] == 5.0);
    CHECK(modulus(CVec(4)) == RVec(4, 0.0));
    std::mt19937_64 rng(6);
    const auto x = oracle::noise(33, rng);
    auto m = modulus(x);
    std::reverse(m.begin(), m.end());
    CHECK(modulus(flip(x)) == m);
}

TEST_CASE("make_views") {
    std::mt19937_64 rng(7);
    const auto x = oracle::noise(512, rng);
    AugmentConfig cfg;
    cfg.methods_enabled = {};
    CHECK_THROWS_AS(make_views(x, cfg, 1), Error);

    cfg.methods_enabled = {Method::flip};
    for (std::uint64_t s = 0; s < 20; ++s) {
        const auto v = make_views(x, cfg, s);
        REQUIRE(v.size() == 2);
        CHECK(v[0].method != v[1].method);
        for (const auto& view : v) {
            if (view.method == Method::identity) CHECK(view.samples == x);
            else CHECK(view.samples == flip(x));
        }
    }

    cfg = AugmentConfig{};
    const auto a = make_views(x, cfg, 99), b = make_views(x, cfg, 99);
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].method == b[i].method);
        CHECK(a[i].samples == b[i].samples);
        CHECK(a[i].samples.size() == 512);
    }

    std::map<Method, int> seen;
    for (std::uint64_t s = 0; s < 1000; ++s) {
        const auto v = make_views(CVec(x.begin(), x.begin() + 16), cfg, s);
        CHECK(v[0].method != v[1].method);
        for (const auto& view : v) ++seen[view.method];
    }
    for (auto m : {Method::identity, Method::rcrs, Method::ad, Method::flip}) {
        CHECK(double(seen[m]) / 1000.0 == doctest::Approx(0.5).epsilon(0.1));
    }
}

TEST_CASE("augmented views keep shallow-feature class separability") {
    synthgen::ClutterConfig cc;
    cc.seed = 31;
    const auto clutter = synthgen::gen_clutter(512 * 40, 1000.0, cc);
    cc.seed = 32;
    synthgen::TargetConfig tc;
    const auto target = synthgen::gen_target_in_clutter(synthgen::gen_clutter(512 * 40, 1000.0, cc), tc);

    features::FeatureConfig fcfg;
    fcfg.time_stride = 16;
    std::vector<dataio::EchoSegment> pool;
    for (std::size_t i = 0; i < 40; ++i) {
        dataio::EchoSegment s;
        s.samples.assign(clutter.samples.begin() + long(512 * i), clutter.samples.begin() + long(512 * (i + 1)));
        pool.push_back(s);
    }
    const auto ref = features::fit_reference(pool, fcfg);

    AugmentConfig acfg;
    std::vector<double> orig, aug;
    std::vector<int> y;
    for (std::size_t i = 0; i < 40; ++i) {
        for (int cls = 0; cls < 2; ++cls) {
            const auto& src = cls ? target.samples : clutter.samples;
            const CVec seg(src.begin() + long(512 * i), src.begin() + long(512 * (i + 1)));
            orig.push_back(features::raw_features(seg, ref, fcfg)[1]);
            const auto views = make_views(seg, acfg, 1000 + i);
            aug.push_back(features::raw_features(views[0].samples, ref, fcfg)[1]);
            y.push_back(cls);
        }
    }
    const double d_orig = gini::best_delta_gini(orig, y).delta;
    const double d_aug = gini::best_delta_gini(aug, y).delta;
    CHECK(d_orig >= 0.45);
    CHECK(d_aug >= 0.45);
}
