#include "runstyle/features.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

namespace runstyle {

const std::array<std::string, kNumFeatures>& feature_names() {
    static const auto names = [] {
        constexpr const char* axes[] = {"x", "y", "z"};
        constexpr const char* stats[] = {"mean", "std",      "min",      "max",
                                         "rms",  "skewness", "kurtosis", "p2p_time"};
        std::array<std::string, kNumFeatures> out;
        for (int a = 0; a < kAxes; ++a) {
            for (int s = 0; s < kStatsPerAxis; ++s) {
                out[a * kStatsPerAxis + s] = std::string(axes[a]) + "_" + stats[s];
            }
        }
        return out;
    }();
    return names;
}

FeatureVector extract_features(std::span<const Sample> samples, double fs) {
    if (samples.empty()) throw ContractError("extract_features: empty segment");
    const auto n = static_cast<double>(samples.size());
    FeatureVector out{};

    for (int a = 0; a < kAxes; ++a) {
        double sum = 0.0, sum_sq = 0.0;
        double lo = samples[0].axis(a), hi = lo;
        std::size_t arg_lo = 0, arg_hi = 0;
        for (std::size_t i = 0; i < samples.size(); ++i) {
            const double v = samples[i].axis(a);
            if (!std::isfinite(v)) throw ContractError("extract_features: non-finite sample");
            sum += v;
            sum_sq += v * v;
            if (v < lo) {
                lo = v;
                arg_lo = i;
            }
            if (v > hi) {
                hi = v;
                arg_hi = i;
            }
        }
        const double mean = sum / n;

        double m2 = 0.0, m3 = 0.0, m4 = 0.0;
        for (const auto& s : samples) {
            const double d = s.axis(a) - mean;
            const double d2 = d * d;
            m2 += d2;
            m3 += d2 * d;
            m4 += d2 * d2;
        }
        m2 /= n;
        m3 /= n;
        m4 /= n;
        const double sd = std::sqrt(m2);

        double skew = 0.0, kurt = 0.0;
        // Constant axes: rounding in the mean can leave a tiny m2; treat as zero.
        if (hi > lo && m2 > 0.0) {
            skew = m3 / (m2 * sd);
            kurt = m4 / (m2 * m2) - 3.0;
        }

        out[feature_slot(a, Stat::mean)] = mean;
        out[feature_slot(a, Stat::std)] = hi > lo ? sd : 0.0;
        out[feature_slot(a, Stat::min)] = lo;
        out[feature_slot(a, Stat::max)] = hi;
        out[feature_slot(a, Stat::rms)] = std::sqrt(sum_sq / n);
        out[feature_slot(a, Stat::skewness)] = skew;
        out[feature_slot(a, Stat::kurtosis)] = kurt;
        out[feature_slot(a, Stat::p2p_time)] =
            static_cast<double>(arg_hi > arg_lo ? arg_hi - arg_lo : arg_lo - arg_hi) / fs;
    }
    return out;
}

FeatureVector extract_features(const Segment& seg) { return extract_features(seg.data(), seg.fs()); }

FeatureMatrix feature_matrix(const SegmentTable& table, SensorLocation sensor) {
    FeatureMatrix m;
    const auto& segs = table.segments(sensor);
    m.features.resize(static_cast<Eigen::Index>(segs.size()), kNumFeatures);
    m.labels = table.labels();
    for (std::size_t i = 0; i < segs.size(); ++i) {
        const auto f = extract_features(segs[i]);
        for (int j = 0; j < kNumFeatures; ++j) m.features(static_cast<Eigen::Index>(i), j) = f[j];
    }
    return m;
}

void write_feature_csv(const FeatureMatrix& m, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
    out.precision(9);
    const auto& names = feature_names();
    for (int j = 0; j < kNumFeatures; ++j) out << names[j] << ',';
    out << "label\n";
    for (Eigen::Index i = 0; i < m.features.rows(); ++i) {
        for (int j = 0; j < kNumFeatures; ++j) out << m.features(i, j) << ',';
        out << to_string(index_label(m.labels[static_cast<std::size_t>(i)])) << '\n';
    }
}

}  // namespace runstyle
