#include "mdfg/giniweight.hpp"

#include <algorithm>
#include <map>
#include <numeric>

#include <nlohmann/json.hpp>

namespace mdfg::gini {

namespace {

// Class ids present in the labels, ascending; fixes the summation order everywhere.
std::vector<int> class_ids(std::span<const int> labels) {
    std::vector<int> ids(labels.begin(), labels.end());
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    return ids;
}

std::size_t class_slot(const std::vector<int>& ids, int label) {
    return static_cast<std::size_t>(std::lower_bound(ids.begin(), ids.end(), label) - ids.begin());
}

// Non-negative rational with 128-bit parts, kept in lowest terms.
struct Fraction {
    unsigned __int128 num = 0;
    unsigned __int128 den = 1;

    static unsigned __int128 gcd(unsigned __int128 a, unsigned __int128 b) {
        while (b != 0) {
            const auto t = a % b;
            a = b;
            b = t;
        }
        return a;
    }
    Fraction(unsigned __int128 n, unsigned __int128 d) : num(n), den(d) {
        const auto g = gcd(num, den);
        if (g > 1) {
            num /= g;
            den /= g;
        }
    }
    bool operator>(const Fraction& o) const { return num * o.den > o.num * den; }
    double value() const {
        constexpr unsigned __int128 exact = static_cast<unsigned __int128>(1) << 53;
        if (num < exact && den < exact) return static_cast<double>(num) / static_cast<double>(den);
        return static_cast<double>(static_cast<long double>(num) / static_cast<long double>(den));
    }
};

unsigned __int128 sum_squares(std::span<const std::size_t> counts) {
    unsigned __int128 s = 0;
    for (auto c : counts) s += static_cast<unsigned __int128>(c) * c;
    return s;
}

// Gini(D) - Gini(D, A) over the common denominator n^2 * n_left * n_right.
Fraction exact_delta(std::span<const std::size_t> total, std::span<const std::size_t> left, std::size_t n_left,
                     std::span<const std::size_t> right, std::size_t n_right) {
    using U = unsigned __int128;
    const U n = n_left + n_right, nl = n_left, nr = n_right;
    const U gain = sum_squares(left) * n * nr + sum_squares(right) * n * nl;
    const U parent = sum_squares(total) * nl * nr;
    return {gain - parent, n * n * nl * nr};
}

// 1 - sum (c/n)^2, rounded once.
double impurity_from_counts(std::span<const std::size_t> counts, std::size_t n) {
    const unsigned __int128 nn = static_cast<unsigned __int128>(n) * n;
    return Fraction(nn - sum_squares(counts), nn).value();
}

// Size-weighted impurity of the two sides, rounded once.
double weighted_split(std::span<const std::size_t> left, std::size_t n_left, std::span<const std::size_t> right,
                      std::size_t n_right) {
    if (n_left == 0) return impurity_from_counts(right, n_right);
    if (n_right == 0) return impurity_from_counts(left, n_left);
    using U = unsigned __int128;
    const U n = n_left + n_right, nl = n_left, nr = n_right;
    return Fraction(n * nl * nr - sum_squares(left) * nr - sum_squares(right) * nl, n * nl * nr).value();
}

}  // namespace

Weighting parse_weighting(const std::string& s) {
    if (s == "proportional") return Weighting::proportional;
    if (s == "rank") return Weighting::rank;
    throw Error(ErrorCode::ConfigError, "weighting must be 'proportional' or 'rank', got '" + s + "'");
}

const char* to_string(Weighting w) { return w == Weighting::rank ? "rank" : "proportional"; }

double gini_impurity(std::span<const int> labels) {
    if (labels.empty()) throw Error(ErrorCode::EmptySet, "gini impurity of an empty set");
    const auto ids = class_ids(labels);
    std::vector<std::size_t> counts(ids.size(), 0);
    for (int l : labels) ++counts[class_slot(ids, l)];
    return impurity_from_counts(counts, labels.size());
}

double gini_index_split(std::span<const double> values, std::span<const int> labels, double threshold) {
    if (values.size() != labels.size()) {
        throw Error(ErrorCode::LengthMismatch, std::to_string(values.size()) + " values vs " +
                                                   std::to_string(labels.size()) + " labels");
    }
    if (values.empty()) throw Error(ErrorCode::EmptySet, "gini index of an empty set");
    const auto ids = class_ids(labels);
    std::vector<std::size_t> left(ids.size(), 0), right(ids.size(), 0);
    std::size_t n_left = 0;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (values[i] <= threshold) {
            ++left[class_slot(ids, labels[i])];
            ++n_left;
        } else {
            ++right[class_slot(ids, labels[i])];
        }
    }
    return weighted_split(left, n_left, right, values.size() - n_left);
}

GiniSplitEval best_delta_gini(std::span<const double> values, std::span<const int> labels, std::size_t feature_index) {
    if (values.size() != labels.size()) {
        throw Error(ErrorCode::LengthMismatch, std::to_string(values.size()) + " values vs " +
                                                   std::to_string(labels.size()) + " labels");
    }
    if (values.size() < 2) throw Error(ErrorCode::InvalidArgument, "best_delta_gini needs at least two samples");

    const auto ids = class_ids(labels);
    const std::size_t n = values.size(), k = ids.size();

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    RVec sorted(n);
    for (std::size_t i = 0; i < n; ++i) sorted[i] = values[order[i]];

    // prefix[i * k + c]: class-c count among the i smallest values
    std::vector<std::size_t> prefix((n + 1) * k, 0);
    for (std::size_t i = 0; i < n; ++i) {
        std::copy_n(prefix.begin() + static_cast<std::ptrdiff_t>(i * k), k, prefix.begin() + static_cast<std::ptrdiff_t>((i + 1) * k));
        ++prefix[(i + 1) * k + class_slot(ids, labels[order[i]])];
    }
    const std::span<const std::size_t> total(prefix.data() + n * k, k);

    GiniSplitEval best;
    best.feature_index = feature_index;
    best.gini_d = impurity_from_counts(total, n);
    best.gini_da = best.gini_d;
    best.delta = 0.0;
    best.threshold = sorted.front();
    bool found = false;
    Fraction best_exact(0, 1);

    std::vector<std::size_t> right(k);
    for (std::size_t i = 0; i + 1 < n; ++i) {
        if (!(sorted[i] < sorted[i + 1])) continue;
        const double mid = (sorted[i] + sorted[i + 1]) / 2.0;
        // partition exactly as {v <= mid}, even if mid rounds onto a neighbour
        const auto n_left = static_cast<std::size_t>(std::upper_bound(sorted.begin(), sorted.end(), mid) - sorted.begin());
        const std::span<const std::size_t> left(prefix.data() + n_left * k, k);
        for (std::size_t c = 0; c < k; ++c) right[c] = total[c] - left[c];
        const Fraction delta = exact_delta(total, left, n_left, right, n - n_left);
        if (!found || delta > best_exact) {
            found = true;
            best_exact = delta;
            best.threshold = mid;
            best.gini_da = weighted_split(left, n_left, right, n - n_left);
            best.delta = delta.value();
        }
    }
    return best;
}

FeatureWeights feature_weights(std::span<const GiniSplitEval> evals, Weighting mode) {
    if (evals.size() != features::kNumFeatures) {
        throw Error(ErrorCode::LengthMismatch, "expected six split evaluations, got " + std::to_string(evals.size()));
    }
    FeatureWeights out;
    features::FeatureArray score{};
    if (mode == Weighting::proportional) {
        for (std::size_t i = 0; i < evals.size(); ++i) score[i] = std::max(0.0, evals[i].delta);
    } else {
        // average 1-based rank of delta, ascending, ties shared
        for (std::size_t i = 0; i < evals.size(); ++i) {
            double below = 0.0, equal = 0.0;
            for (const auto& e : evals) {
                if (e.delta < evals[i].delta) below += 1.0;
                if (e.delta == evals[i].delta) equal += 1.0;
            }
            score[i] = below + (equal + 1.0) / 2.0;
        }
    }
    const double total = std::accumulate(score.begin(), score.end(), 0.0);
    for (std::size_t i = 0; i < score.size(); ++i) {
        out.w[i] = total > 0.0 ? score[i] / total : 1.0 / static_cast<double>(features::kNumFeatures);
    }
    return out;
}

features::FeatureArray apply_weights(const features::ShallowFeatureVector& f, const FeatureWeights& w) {
    const auto a = f.as_array();
    features::FeatureArray out{};
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = w.w[i] * a[i];
    return out;
}

std::vector<GiniSplitEval> evaluate_features(const std::vector<features::FeatureArray>& rows, std::span<const int> labels) {
    std::vector<GiniSplitEval> evals;
    RVec column(rows.size());
    for (std::size_t f = 0; f < features::kNumFeatures; ++f) {
        for (std::size_t i = 0; i < rows.size(); ++i) column[i] = rows[i][f];
        evals.push_back(best_delta_gini(column, labels, f));
    }
    return evals;
}

std::string weights_report_json(std::span<const GiniSplitEval> evals, const FeatureWeights& w, Weighting mode) {
    nlohmann::ordered_json j;
    j["weighting"] = to_string(mode);
    auto arr = nlohmann::ordered_json::array();
    for (std::size_t i = 0; i < evals.size(); ++i) {
        nlohmann::ordered_json e;
        e["feature"] = features::kFeatureNames[evals[i].feature_index];
        e["threshold"] = evals[i].threshold;
        e["gini_d"] = evals[i].gini_d;
        e["gini_da"] = evals[i].gini_da;
        e["delta_gini"] = evals[i].delta;
        e["weight"] = w.w[evals[i].feature_index];
        arr.push_back(e);
    }
    j["features"] = arr;
    return j.dump(2) + "\n";
}

FeatureWeights weights_from_report_json(const std::string& text) {
    try {
        const auto j = nlohmann::json::parse(text);
        FeatureWeights w;
        const auto& arr = j.at("features");
        if (arr.size() != features::kNumFeatures) throw Error(ErrorCode::MalformedHeader, "weights report needs six features");
        for (std::size_t i = 0; i < arr.size(); ++i) w.w[i] = arr[i].at("weight").get<double>();
        return w;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::MalformedHeader, std::string("weights report: ") + e.what());
    }
}

}  // namespace mdfg::gini
