#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace runstyle {

inline constexpr int kNumStyles = 8;
inline constexpr int kNumSensors = 5;
inline constexpr int kAxes = 3;
inline constexpr double kDefaultSampleRate = 500.0;
inline constexpr std::string_view kAccelUnit = "g";

/// Running styles, in the order the taxonomy lists them.
enum class StyleLabel : int {
    egg_beater = 0,
    bouncing,
    heel_strike,
    toe_strike,
    long_stride,
    short_stride,
    wide_stance,
    narrow_stance,
};

/// Sensor placements. `com` is the lower-back centre-of-mass unit.
enum class SensorLocation : int { com = 0, lfoot, lshank, rfoot, rshank };

inline constexpr std::array<StyleLabel, kNumStyles> kAllStyles = {
    StyleLabel::egg_beater,  StyleLabel::bouncing,     StyleLabel::heel_strike,
    StyleLabel::toe_strike,  StyleLabel::long_stride,  StyleLabel::short_stride,
    StyleLabel::wide_stance, StyleLabel::narrow_stance,
};

inline constexpr std::array<SensorLocation, kNumSensors> kAllSensors = {
    SensorLocation::com, SensorLocation::lfoot, SensorLocation::lshank,
    SensorLocation::rfoot, SensorLocation::rshank,
};

int label_index(StyleLabel label);
StyleLabel index_label(int index);
int sensor_index(SensorLocation sensor);
SensorLocation index_sensor(int index);

std::string_view to_string(StyleLabel label);
std::string_view to_string(SensorLocation sensor);
/// Column title used in rendered tables ("COM", "LFoot", ...).
std::string_view display_name(SensorLocation sensor);

std::optional<StyleLabel> parse_style(std::string_view name);
std::optional<SensorLocation> parse_sensor(std::string_view name);

/// One acceleration sample [g]; x fore-aft, y lateral, z vertical.
struct Sample {
    double ax = 0.0;
    double ay = 0.0;
    double az = 0.0;

    double axis(int a) const { return a == 0 ? ax : (a == 1 ? ay : az); }
    bool operator==(const Sample&) const = default;
};

struct ImuRecording {
    std::string subject_id;
    StyleLabel style = StyleLabel::egg_beater;
    SensorLocation sensor = SensorLocation::com;
    double fs = kDefaultSampleRate;
    std::vector<Sample> samples;

    bool operator==(const ImuRecording&) const = default;
};

struct SubjectMeta {
    std::string subject_id;
    std::optional<double> height_m;
    std::optional<double> weight_kg;
    std::optional<double> age_years;
    std::optional<std::string> sex;

    bool operator==(const SubjectMeta&) const = default;
};

struct Dataset {
    std::vector<SubjectMeta> subjects;
    std::vector<ImuRecording> recordings;
};

struct Violation {
    std::string key;
    std::string rule;
};

using ValidationReport = std::vector<Violation>;

/// Human-readable key "S01/bouncing/com".
std::string recording_key(const std::string& subject_id, StyleLabel style,
                          SensorLocation sensor);

/// Checks every Dataset invariant; an empty report means the dataset is valid.
/// `expected_fs` defaults to the 500 Hz sampling contract.
ValidationReport validate_dataset(const Dataset& d, double expected_fs = kDefaultSampleRate);

class ContractError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

}  // namespace runstyle
