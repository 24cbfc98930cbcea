#include "runstyle/domain.hpp"

#include <cmath>
#include <map>
#include <set>
#include <tuple>

namespace runstyle {

namespace {

constexpr std::array<std::string_view, kNumStyles> kStyleNames = {
    "egg_beater",  "bouncing",     "heel_strike", "toe_strike",
    "long_stride", "short_stride", "wide_stance", "narrow_stance",
};

constexpr std::array<std::string_view, kNumSensors> kSensorNames = {
    "com", "lfoot", "lshank", "rfoot", "rshank",
};

constexpr std::array<std::string_view, kNumSensors> kSensorTitles = {
    "COM", "LFoot", "LShank", "RFoot", "RShank",
};

}  // namespace

int label_index(StyleLabel label) { return static_cast<int>(label); }

StyleLabel index_label(int index) {
    if (index < 0 || index >= kNumStyles) {
        throw ContractError("style index out of range: " + std::to_string(index));
    }
    return static_cast<StyleLabel>(index);
}

int sensor_index(SensorLocation sensor) { return static_cast<int>(sensor); }

SensorLocation index_sensor(int index) {
    if (index < 0 || index >= kNumSensors) {
        throw ContractError("sensor index out of range: " + std::to_string(index));
    }
    return static_cast<SensorLocation>(index);
}

std::string_view to_string(StyleLabel label) { return kStyleNames[label_index(label)]; }

std::string_view to_string(SensorLocation sensor) { return kSensorNames[sensor_index(sensor)]; }

std::string_view display_name(SensorLocation sensor) {
    return kSensorTitles[sensor_index(sensor)];
}

std::optional<StyleLabel> parse_style(std::string_view name) {
    for (int i = 0; i < kNumStyles; ++i) {
        if (kStyleNames[i] == name) return static_cast<StyleLabel>(i);
    }
    return std::nullopt;
}

std::optional<SensorLocation> parse_sensor(std::string_view name) {
    for (int i = 0; i < kNumSensors; ++i) {
        if (kSensorNames[i] == name) return static_cast<SensorLocation>(i);
    }
    return std::nullopt;
}

std::string recording_key(const std::string& subject_id, StyleLabel style,
                          SensorLocation sensor) {
    std::string key = subject_id;
    key += '/';
    key += to_string(style);
    key += '/';
    key += to_string(sensor);
    return key;
}

ValidationReport validate_dataset(const Dataset& d, double expected_fs) {
    ValidationReport report;

    std::set<std::string> subject_ids;
    for (const auto& s : d.subjects) {
        if (!subject_ids.insert(s.subject_id).second) {
            report.push_back({s.subject_id, "duplicate subject id"});
        }
        auto positive = [](const std::optional<double>& v) { return !v || *v > 0.0; };
        if (!positive(s.height_m) || !positive(s.weight_kg) || !positive(s.age_years)) {
            report.push_back({s.subject_id, "physical fields must be positive"});
        }
    }

    // (subject, style) -> sensor -> sample count
    std::map<std::pair<std::string, int>, std::map<int, std::size_t>> groups;
    std::set<std::tuple<std::string, int, int>> seen;

    for (const auto& r : d.recordings) {
        const std::string key = recording_key(r.subject_id, r.style, r.sensor);
        if (!seen.emplace(r.subject_id, label_index(r.style), sensor_index(r.sensor)).second) {
            report.push_back({key, "duplicate recording key"});
            continue;
        }
        if (!subject_ids.empty() && subject_ids.count(r.subject_id) == 0) {
            report.push_back({key, "recording references unknown subject"});
        }
        if (r.fs != expected_fs) {
            report.push_back({key, "sampling rate != " + std::to_string(static_cast<int>(expected_fs))});
        }
        if (r.samples.empty()) {
            report.push_back({key, "empty recording"});
        }
        for (std::size_t i = 0; i < r.samples.size(); ++i) {
            const auto& s = r.samples[i];
            if (!std::isfinite(s.ax) || !std::isfinite(s.ay) || !std::isfinite(s.az)) {
                report.push_back({key, "non-finite sample at index " + std::to_string(i)});
                break;
            }
        }
        groups[{r.subject_id, label_index(r.style)}][sensor_index(r.sensor)] = r.samples.size();
    }

    for (const auto& [group, sensors] : groups) {
        const auto& [subject, style] = group;
        for (auto sensor : kAllSensors) {
            if (sensors.count(sensor_index(sensor)) == 0) {
                report.push_back({recording_key(subject, index_label(style), sensor),
                                  "missing sensor recording"});
            }
        }
        std::set<std::size_t> lengths;
        for (const auto& [_, n] : sensors) lengths.insert(n);
        if (lengths.size() > 1) {
            report.push_back({subject + "/" + std::string(to_string(index_label(style))),
                              "sensor sample counts differ"});
        }
    }
    return report;
}

}  // namespace runstyle
