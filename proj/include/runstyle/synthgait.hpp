#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>

#include "json.hpp"
#include "runstyle/domain.hpp"

namespace runstyle {

inline constexpr int kHarmonics = 4;

/// Style knobs a subject executes idiosyncratically. Each style carries its
/// own multiplicative delta per knob.
enum class Knob : int {
    vertical_amp = 0,
    fore_aft_amp,
    lateral_amp,
    impact_mag,
    impact_decay,
    impact_freq,
    stride_mult,
    lateral_dc,
    lateral_phase,
};
inline constexpr int kNumKnobs = 9;

/// How a style departs from neutral running. Multipliers are relative to the
/// neutral baseline; `lateral_dc_g` is signed for the left foot and mirrored
/// on the right.
struct StyleModifier {
    double vertical = 1.0;
    double fore_aft = 1.0;
    double lateral_limb = 1.0;  // feet and shanks
    double lateral_com = 1.0;
    double lateral_phase_rad = 0.0;  // feet and shanks
    double impact = 1.0;
    double decay = 1.0;
    double ring_freq = 1.0;
    double stride = 1.0;
    double lateral_dc_g = 0.0;  // feet only
};

/// Neutral-gait constants per sensor group, index 0 feet, 1 shanks, 2 COM.
struct NeutralBaseline {
    std::array<double, 3> vertical = {1.0, 0.7, 0.4};
    std::array<double, 3> fore_aft = {0.5, 0.4, 0.2};
    std::array<double, 3> lateral = {0.3, 0.25, 0.15};
    std::array<double, 3> impact = {3.0, 2.0, 0.8};
    double decay_s = 0.03;
    double ring_hz = 25.0;
};

struct GeneratorConfig {
    int n_subjects = 10;
    double duration_s = 300.0;
    double fs = kDefaultSampleRate;
    double personalization = 0.15;
    std::uint64_t seed = 42;
    NeutralBaseline baseline;
    std::array<StyleModifier, kNumStyles> modifiers = default_modifiers();

    static std::array<StyleModifier, kNumStyles> default_modifiers();
    std::size_t n_samples() const;
};

void to_json(nlohmann::json& j, const GeneratorConfig& c);
/// Missing keys keep their defaults, so partial configs are accepted.
void from_json(const nlohmann::json& j, GeneratorConfig& c);

struct SubjectProfile {
    std::string subject_id;
    int index = 0;
    double stride_freq_hz = 1.4;
    double amplitude_scale = 1.0;
    double noise_sigma_g = 0.1;
    std::array<std::array<double, kNumKnobs>, kNumStyles> personalization{};
    std::uint64_t seed = 0;

    double eps(StyleLabel s, Knob k) const {
        return personalization[label_index(s)][static_cast<int>(k)];
    }
};

struct AxisHarmonics {
    std::array<double, kHarmonics> amplitude{};  // [g]
    std::array<double, kHarmonics> phase{};      // [rad]
};

/// Signal parameters for one sensor; axes ordered x fore-aft, y lateral, z vertical.
struct StyleParams {
    std::array<AxisHarmonics, kAxes> axes{};
    double impact_g = 0.0;
    double decay_s = 0.03;
    double ring_hz = 25.0;
    double lateral_dc_g = 0.0;
    double stride_freq_hz = 1.4;  // effective, after style and subject
};

SubjectProfile make_subject(int index, const GeneratorConfig& cfg);

/// Style-modified parameters for every sensor, indexed by sensor_index().
std::array<StyleParams, kNumSensors> style_params(StyleLabel style, const SubjectProfile& subject,
                                                  const GeneratorConfig& cfg);
/// The same subject running with all modifiers at identity.
std::array<StyleParams, kNumSensors> neutral_params(const SubjectProfile& subject,
                                                    const GeneratorConfig& cfg);

ImuRecording generate_recording(const SubjectProfile& subject, StyleLabel style,
                                SensorLocation sensor, const GeneratorConfig& cfg);

/// Noise-free variant of generate_recording, used for bounds checks.
ImuRecording generate_clean_recording(const SubjectProfile& subject, StyleLabel style,
                                      SensorLocation sensor, const GeneratorConfig& cfg);

Dataset generate_dataset(const GeneratorConfig& cfg);

class OutputCollisionError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Generates and writes the dataset plus manifest. A non-empty `dir` is an
/// error unless `overwrite` is set. Returns the manifest path.
std::filesystem::path write_generated_dataset(const GeneratorConfig& cfg,
                                              const std::filesystem::path& dir, bool overwrite);

}  // namespace runstyle
