#pragma once

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <numbers>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "embalign/errors.hpp"
#include "embalign/resample.hpp"
#include "embalign/volume.hpp"

namespace embalign {

enum class Method { Default, Pearson, Atlas, Forest, Majority };

inline constexpr std::array<Method, 5> kAllMethods{Method::Default, Method::Pearson, Method::Atlas, Method::Forest,
                                                   Method::Majority};

inline const char* to_string(Method m) {
    switch (m) {
    case Method::Default: return "default";
    case Method::Pearson: return "pearson";
    case Method::Atlas: return "atlas";
    case Method::Forest: return "forest";
    case Method::Majority: return "majority";
    }
    return "?";
}

inline Method parse_method(const std::string& s) {
    for (Method m : kAllMethods) {
        if (s == to_string(m)) return m;
    }
    throw ArgumentError("unknown method '" + s + "'");
}

/// Geodesic angle between two rotations in degrees.
inline double rotation_angle(const Mat3& a, const Mat3& b) {
    if (!is_rotation(a, 1e-6) || !is_rotation(b, 1e-6)) throw ArgumentError("rotation_angle: input is not a rotation");
    // sin from the skew part and cos from the trace; atan2 keeps precision near 180 degrees
    const Mat3 r = a.transpose() * b;
    const double s = (r - r.transpose()).norm() / (2.0 * std::numbers::sqrt2);
    const double c = (r.trace() - 1.0) / 2.0;
    return std::atan2(s, c) * 180.0 / std::numbers::pi;
}

inline constexpr double kDefaultToleranceDeg = 15.0;

/// Error of an alignment (world -> standard frame) against the phantom truth,
/// whose inverse is the ideal alignment.
inline double alignment_error_deg(const Mat3& truth_rotation, const Mat3& alignment) {
    return rotation_angle(alignment, truth_rotation.transpose());
}

inline bool judge(const Mat3& truth_rotation, const Mat3& alignment, double tolerance_deg = kDefaultToleranceDeg) {
    return alignment_error_deg(truth_rotation, alignment) <= tolerance_deg;
}

// ---------------------------------------------------------------------------
// McNemar mid-p

namespace mcnemar_detail {

inline std::uint64_t binom_u64(std::uint64_t n, std::uint64_t k) {
    k = std::min(k, n - k);
    std::uint64_t r = 1;
    for (std::uint64_t i = 1; i <= k; ++i) r = r / i * (n - k + i) + r % i * (n - k + i) / i;
    return r;
}

} // namespace mcnemar_detail

/// Two-sided exact McNemar p-value with the mid-p correction, from the
/// discordant counts b and c.
inline double mcnemar_mid_p(std::int64_t b, std::int64_t c) {
    if (b < 0 || c < 0) throw ArgumentError("mcnemar_mid_p: counts must be non-negative");
    const std::int64_t n = b + c;
    if (n == 0) return 1.0;
    const std::int64_t k = std::max(b, c);
    double tail = 0.0, point = 0.0;
    if (n <= 62) {
        std::uint64_t sum = 0;
        for (std::int64_t i = k; i <= n; ++i) sum += mcnemar_detail::binom_u64(static_cast<std::uint64_t>(n), static_cast<std::uint64_t>(i));
        tail = std::ldexp(static_cast<double>(sum), static_cast<int>(-n));
        point = std::ldexp(static_cast<double>(mcnemar_detail::binom_u64(static_cast<std::uint64_t>(n), static_cast<std::uint64_t>(k))),
                           static_cast<int>(-n));
    } else {
        const double nn = static_cast<double>(n);
        auto log_pmf = [&](double i) { return std::lgamma(nn + 1) - std::lgamma(i + 1) - std::lgamma(nn - i + 1) - nn * std::numbers::ln2; };
        for (std::int64_t i = n; i >= k; --i) tail += std::exp(log_pmf(static_cast<double>(i)));
        point = std::exp(log_pmf(static_cast<double>(k)));
    }
    const double p = std::min(1.0, 2.0 * tail);
    return std::clamp(p - point, 0.0, 1.0);
}

// ---------------------------------------------------------------------------
// reports

struct TrialResult {
    std::string sample_id;
    int week = 0;
    Method method = Method::Default;
    std::optional<std::size_t> chosen;  // nullopt = failure
    bool correct = false;
    std::optional<double> rotation_error_deg;
    bool candidate_available = false;  // any of the four candidates passes judge
};

struct GroupStats {
    std::size_t n = 0;
    std::map<Method, double> accuracy;
    double pca_candidate_available_rate = 0.0;
};

struct EvaluationReport {
    std::map<int, GroupStats> per_week;
    GroupStats overall;
    std::map<std::pair<Method, Method>, double> mcnemar;
    std::vector<Method> methods;
};

inline EvaluationReport build_report(const std::vector<TrialResult>& results) {
    if (results.empty()) throw ArgumentError("build_report: no results");
    EvaluationReport report;
    std::set<Method> methods;
    // sample -> (week, available, method -> correct)
    struct Row {
        int week = 0;
        bool available = false;
        std::map<Method, bool> correct;
    };
    std::map<std::string, Row> rows;
    for (const auto& r : results) {
        if (r.correct && !r.chosen) throw ArgumentError("build_report: a failure cannot be correct");
        methods.insert(r.method);
        auto& row = rows[r.sample_id];
        row.week = r.week;
        row.available = r.candidate_available;
        row.correct[r.method] = r.correct;
    }
    report.methods.assign(methods.begin(), methods.end());

    auto accumulate = [&](GroupStats& g, const Row& row) {
        ++g.n;
        if (row.available) g.pca_candidate_available_rate += 1.0;
        for (Method m : report.methods) {
            auto it = row.correct.find(m);
            if (it != row.correct.end() && it->second) g.accuracy[m] += 1.0;
        }
    };
    for (const auto& [id, row] : rows) {
        accumulate(report.overall, row);
        accumulate(report.per_week[row.week], row);
    }
    auto finish = [&](GroupStats& g) {
        for (Method m : report.methods) g.accuracy[m] /= static_cast<double>(g.n);
        g.pca_candidate_available_rate /= static_cast<double>(g.n);
    };
    finish(report.overall);
    for (auto& [w, g] : report.per_week) finish(g);

    for (std::size_t a = 0; a < report.methods.size(); ++a) {
        for (std::size_t b = a + 1; b < report.methods.size(); ++b) {
            const Method ma = report.methods[a], mb = report.methods[b];
            std::int64_t only_a = 0, only_b = 0;
            for (const auto& [id, row] : rows) {
                const bool ca = row.correct.count(ma) && row.correct.at(ma);
                const bool cb = row.correct.count(mb) && row.correct.at(mb);
                only_a += ca && !cb;
                only_b += !ca && cb;
            }
            const double p = mcnemar_mid_p(only_a, only_b);
            report.mcnemar[{ma, mb}] = p;
            report.mcnemar[{mb, ma}] = p;
        }
    }
    return report;
}

inline nlohmann::json group_json(const GroupStats& g) {
    nlohmann::json acc = nlohmann::json::object();
    for (const auto& [m, a] : g.accuracy) acc[to_string(m)] = a;
    return {{"n", g.n}, {"accuracy", acc}, {"pca_candidate_available_rate", g.pca_candidate_available_rate}};
}

inline nlohmann::json report_json(const EvaluationReport& r) {
    nlohmann::json weeks = nlohmann::json::object();
    for (const auto& [w, g] : r.per_week) weeks[std::to_string(w)] = group_json(g);
    nlohmann::json pairs = nlohmann::json::array();
    for (std::size_t a = 0; a < r.methods.size(); ++a) {
        for (std::size_t b = a + 1; b < r.methods.size(); ++b) {
            pairs.push_back({{"a", to_string(r.methods[a])},
                             {"b", to_string(r.methods[b])},
                             {"mid_p", r.mcnemar.at({r.methods[a], r.methods[b]})}});
        }
    }
    nlohmann::json methods = nlohmann::json::array();
    for (Method m : r.methods) methods.push_back(to_string(m));
    return {{"methods", methods}, {"per_week", weeks}, {"overall", group_json(r.overall)}, {"mcnemar", pairs}};
}

/// Plain-text table: methods as rows, All + weeks as columns, percentages
/// with one decimal. Mid-p values against majority follow when available.
inline std::string report_table(const EvaluationReport& r) {
    std::ostringstream os;
    auto cell = [&](const std::string& s) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%9s", s.c_str());
        os << buf;
    };
    auto label = [&](const std::string& s) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "%-26s", s.c_str());
        os << buf;
    };
    auto pct = [](double v) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.1f", 100.0 * v);
        return std::string(buf);
    };

    label("Gestational week");
    cell("All");
    for (const auto& [w, g] : r.per_week) cell(std::to_string(w));
    os << '\n';
    label("Number of images");
    cell(std::to_string(r.overall.n));
    for (const auto& [w, g] : r.per_week) cell(std::to_string(g.n));
    os << '\n';
    label("Candidate available");
    cell(pct(r.overall.pca_candidate_available_rate));
    for (const auto& [w, g] : r.per_week) cell(pct(g.pca_candidate_available_rate));
    os << '\n';
    for (Method m : r.methods) {
        label(std::string("PCA + ") + to_string(m));
        cell(pct(r.overall.accuracy.at(m)));
        for (const auto& [w, g] : r.per_week) cell(pct(g.accuracy.at(m)));
        os << '\n';
    }
    const bool has_majority = std::find(r.methods.begin(), r.methods.end(), Method::Majority) != r.methods.end();
    if (has_majority && r.methods.size() > 1) {
        os << "\nMcNemar mid-p vs majority\n";
        for (Method m : r.methods) {
            if (m == Method::Majority) continue;
            char buf[32];
            std::snprintf(buf, sizeof buf, "%.4g", r.mcnemar.at({m, Method::Majority}));
            label(to_string(m));
            cell(buf);
            os << '\n';
        }
    }
    return os.str();
}

} // namespace embalign
