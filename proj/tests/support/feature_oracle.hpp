#pragma once

// Brute-force feature definitions, written straight from the formulas with
// one loop per statistic and long double accumulators. Shared by the unit
// tests and the acceptance binary.

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "runstyle/features.hpp"

namespace oracle {

inline runstyle::FeatureVector features(std::span<const runstyle::Sample> samples, double fs) {
    using runstyle::Stat;
    runstyle::FeatureVector out{};
    const std::size_t n = samples.size();
    for (int a = 0; a < runstyle::kAxes; ++a) {
        std::vector<long double> x(n);
        for (std::size_t i = 0; i < n; ++i) x[i] = samples[i].axis(a);

        long double sum = 0;
        for (std::size_t i = 0; i < n; ++i) sum += x[i];
        const long double mean = sum / n;

        long double var = 0;
        for (std::size_t i = 0; i < n; ++i) var += (x[i] - mean) * (x[i] - mean);
        var /= n;
        const long double sd = std::sqrt(var);

        long double lo = x[0];
        std::size_t arg_lo = 0;
        for (std::size_t i = 1; i < n; ++i) {
            if (x[i] < lo) {
                lo = x[i];
                arg_lo = i;
            }
        }
        long double hi = x[0];
        std::size_t arg_hi = 0;
        for (std::size_t i = 1; i < n; ++i) {
            if (x[i] > hi) {
                hi = x[i];
                arg_hi = i;
            }
        }

        long double sq = 0;
        for (std::size_t i = 0; i < n; ++i) sq += x[i] * x[i];
        const long double rms = std::sqrt(sq / n);

        long double skew = 0, kurt = 0;
        if (hi > lo) {
            long double m3 = 0, m4 = 0;
            for (std::size_t i = 0; i < n; ++i) m3 += std::pow(x[i] - mean, 3);
            for (std::size_t i = 0; i < n; ++i) m4 += std::pow(x[i] - mean, 4);
            skew = (m3 / n) / std::pow(sd, 3);
            kurt = (m4 / n) / std::pow(sd, 4) - 3;
        }

        const long double gap = arg_hi > arg_lo ? arg_hi - arg_lo : arg_lo - arg_hi;
        out[runstyle::feature_slot(a, Stat::mean)] = static_cast<double>(mean);
        out[runstyle::feature_slot(a, Stat::std)] = hi > lo ? static_cast<double>(sd) : 0.0;
        out[runstyle::feature_slot(a, Stat::min)] = static_cast<double>(lo);
        out[runstyle::feature_slot(a, Stat::max)] = static_cast<double>(hi);
        out[runstyle::feature_slot(a, Stat::rms)] = static_cast<double>(rms);
        out[runstyle::feature_slot(a, Stat::skewness)] = static_cast<double>(skew);
        out[runstyle::feature_slot(a, Stat::kurtosis)] = static_cast<double>(kurt);
        out[runstyle::feature_slot(a, Stat::p2p_time)] = static_cast<double>(gap / fs);
    }
    return out;
}

/// |a - b| relative to max(|b|, 1); features are O(1) in g, so the floor
/// keeps near-zero means and skews from inflating the ratio.
inline double relative_error(double a, double b) {
    return std::abs(a - b) / std::max(std::abs(b), 1.0);
}

}  // namespace oracle
