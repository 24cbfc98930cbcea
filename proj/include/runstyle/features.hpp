#pragma once

#include <array>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "runstyle/windowing.hpp"

namespace runstyle {

inline constexpr int kStatsPerAxis = 8;
inline constexpr int kNumFeatures = kAxes * kStatsPerAxis;

/// Per axis (x, y, z): mean, std, min, max, rms, skewness, kurtosis, p2p_time.
using FeatureVector = std::array<double, kNumFeatures>;

enum class Stat : int { mean = 0, std, min, max, rms, skewness, kurtosis, p2p_time };

constexpr int feature_slot(int axis, Stat stat) {
    return axis * kStatsPerAxis + static_cast<int>(stat);
}

/// Names `x_mean, x_std, ..., z_p2p_time`.
const std::array<std::string, kNumFeatures>& feature_names();

/// Population moments; skewness = m3/std^3, kurtosis = m4/std^4 - 3, both 0
/// for a constant axis. p2p_time = |argmax - argmin| / fs, first occurrence.
FeatureVector extract_features(std::span<const Sample> samples, double fs);
FeatureVector extract_features(const Segment& seg);

struct FeatureMatrix {
    Eigen::MatrixXd features;  // rows = segments in table order
    std::vector<int> labels;
};

FeatureMatrix feature_matrix(const SegmentTable& table, SensorLocation sensor);

void write_feature_csv(const FeatureMatrix& m, const std::filesystem::path& path);

}  // namespace runstyle
