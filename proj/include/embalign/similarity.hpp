#pragma once

#include <algorithm>
#include <cmath>
#include <span>

#include "embalign/errors.hpp"
#include "embalign/volume.hpp"

namespace embalign {

/// Sample Pearson correlation, accumulated with Welford-style co-moments.
inline double pearson_r(std::span<const double> xs, std::span<const double> ys) {
    if (xs.size() != ys.size()) throw ArgumentError("pearson_r: length mismatch");
    if (xs.size() < 2) throw ArgumentError("pearson_r: need at least two points");
    double mx = 0.0, my = 0.0, cxx = 0.0, cyy = 0.0, cxy = 0.0;
    bool xconst = true, yconst = true;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double n = static_cast<double>(i + 1);
        const double dx = xs[i] - mx;
        const double dy = ys[i] - my;
        mx += dx / n;
        my += dy / n;
        cxx += dx * (xs[i] - mx);
        cyy += dy * (ys[i] - my);
        cxy += dx * (ys[i] - my);
        xconst = xconst && xs[i] == xs[0];
        yconst = yconst && ys[i] == ys[0];
    }
    if (xconst || yconst || !(cxx > 0.0) || !(cyy > 0.0)) throw DegenerateInputError("pearson_r: zero variance");
    return std::clamp(cxy / std::sqrt(cxx * cyy), -1.0, 1.0);
}

/// Zero-lag normalized cross-correlation of two equally shaped volumes.
inline double ncc(const Volume3D& a, const Volume3D& b) {
    if (a.dims != b.dims) throw ShapeError("ncc: volume dims differ");
    const std::size_t n = a.data.size();
    if (n == 0) throw DegenerateInputError("ncc: empty volumes");
    double sa = 0.0, sb = 0.0;
    auto [amin, amax] = std::minmax_element(a.data.begin(), a.data.end());
    auto [bmin, bmax] = std::minmax_element(b.data.begin(), b.data.end());
    if (*amin == *amax || *bmin == *bmax) throw DegenerateInputError("ncc: zero intensity variance");
    for (std::size_t i = 0; i < n; ++i) {
        sa += a.data[i];
        sb += b.data[i];
    }
    const double ma = sa / static_cast<double>(n);
    const double mb = sb / static_cast<double>(n);
    double saa = 0.0, sbb = 0.0, sab = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double da = a.data[i] - ma;
        const double db = b.data[i] - mb;
        saa += da * da;
        sbb += db * db;
        sab += da * db;
    }
    if (!(saa > 0.0) || !(sbb > 0.0)) throw DegenerateInputError("ncc: zero intensity variance");
    return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

} // namespace embalign
