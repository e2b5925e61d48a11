#pragma once

// Independent reference implementations used to check the library.

#include <boost/rational.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

namespace oracles {

/// Textbook two-pass correlation in long double.
inline double two_pass_pearson(const std::vector<double>& x, const std::vector<double>& y) {
    long double mx = 0, my = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= static_cast<long double>(x.size());
    my /= static_cast<long double>(y.size());
    long double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    return static_cast<double>(sxy / std::sqrt(sxx * syy));
}

/// Mid-p McNemar value by exact enumeration of the Binomial(b + c, 1/2) pmf.
inline double mid_p(long long b, long long c) {
    using Q = boost::rational<long long>;
    const long long n = b + c;
    if (n == 0) return 1.0;
    const long long k = std::min(b, c);
    std::vector<long long> binom(static_cast<std::size_t>(n + 1), 1);
    for (long long i = 1; i <= n; ++i) {
        binom[static_cast<std::size_t>(i)] = binom[static_cast<std::size_t>(i - 1)] * (n - i + 1) / i;
    }
    const long long denom = 1LL << n;
    Q tail(0);
    for (long long i = 0; i <= k; ++i) tail += Q(binom[static_cast<std::size_t>(i)], denom);
    Q p = 2 * tail;
    if (p > 1) p = 1;
    return boost::rational_cast<double>(p - Q(binom[static_cast<std::size_t>(k)], denom));
}

/// Node of the brute-force CART tree, preorder; feature -1 is a leaf.
struct CartNode {
    int feature = -1;
    double threshold = 0.0;
    std::array<std::uint32_t, 2> counts{0, 0};
};

namespace detail {

using Q = boost::rational<long long>;

inline Q gini(long long n0, long long n1) {
    const long long n = n0 + n1;
    return Q(1) - Q(n0 * n0 + n1 * n1, n * n);
}

inline void grow(const std::vector<std::vector<float>>& x, const std::vector<int>& y, const std::vector<std::size_t>& idx,
                 std::vector<CartNode>& out) {
    long long c0 = 0, c1 = 0;
    for (auto i : idx) (y[i] ? c1 : c0)++;
    const std::size_t me = out.size();
    out.emplace_back();
    bool found = false;
    Q best;
    int best_f = 0;
    double best_t = 0.0;
    if (c0 > 0 && c1 > 0) {
        for (std::size_t f = 0; f < x[0].size(); ++f) {
            std::vector<float> vals;
            for (auto i : idx) vals.push_back(x[i][f]);
            std::sort(vals.begin(), vals.end());
            vals.erase(std::unique(vals.begin(), vals.end()), vals.end());
            for (std::size_t k = 0; k + 1 < vals.size(); ++k) {
                const double t = 0.5 * (static_cast<double>(vals[k]) + static_cast<double>(vals[k + 1]));
                long long l0 = 0, l1 = 0, r0 = 0, r1 = 0;
                for (auto i : idx) {
                    if (static_cast<double>(x[i][f]) <= t) {
                        (y[i] ? l1 : l0)++;
                    } else {
                        (y[i] ? r1 : r0)++;
                    }
                }
                const long long n = l0 + l1 + r0 + r1;
                const Q impurity = Q(l0 + l1, n) * gini(l0, l1) + Q(r0 + r1, n) * gini(r0, r1);
                // strict improvement only: earlier (lower feature, lower threshold) wins ties
                if (!found || impurity < best) {
                    found = true;
                    best = impurity;
                    best_f = static_cast<int>(f);
                    best_t = t;
                }
            }
        }
    }
    if (!found) {
        out[me].counts = {static_cast<std::uint32_t>(c0), static_cast<std::uint32_t>(c1)};
        return;
    }
    out[me].feature = best_f;
    out[me].threshold = best_t;
    std::vector<std::size_t> left, right;
    for (auto i : idx) (static_cast<double>(x[i][static_cast<std::size_t>(best_f)]) <= best_t ? left : right).push_back(i);
    grow(x, y, left, out);
    grow(x, y, right, out);
}

} // namespace detail

/// Fully grown CART tree over every feature and every midpoint, scored by
/// weighted Gini impurity in exact rational arithmetic.
inline std::vector<CartNode> cart_tree(const std::vector<std::vector<float>>& x, const std::vector<int>& y) {
    std::vector<std::size_t> all(x.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    std::vector<CartNode> out;
    detail::grow(x, y, all, out);
    return out;
}

} // namespace oracles
