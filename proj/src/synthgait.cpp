#include "runstyle/synthgait.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <random>

#include "runstyle/ingest.hpp"

namespace runstyle {

using nlohmann::json;

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

// Impact transient coupling onto the fore-aft axis (vertical gets 1.0).
constexpr double kImpactForeAft = 0.4;
constexpr double kOppositeSideCoupling = 0.3;
constexpr double kComCoupling = 0.6;

enum class Group { feet = 0, shanks = 1, com = 2 };
enum class Side { left, right, centre };

Group group_of(SensorLocation s) {
    switch (s) {
        case SensorLocation::lfoot:
        case SensorLocation::rfoot: return Group::feet;
        case SensorLocation::lshank:
        case SensorLocation::rshank: return Group::shanks;
        case SensorLocation::com: break;
    }
    return Group::com;
}

Side side_of(SensorLocation s) {
    switch (s) {
        case SensorLocation::lfoot:
        case SensorLocation::lshank: return Side::left;
        case SensorLocation::rfoot:
        case SensorLocation::rshank: return Side::right;
        case SensorLocation::com: break;
    }
    return Side::centre;
}

std::mt19937_64 derive_stream(std::uint64_t seed, std::uint32_t tag, std::uint32_t a,
                              std::uint32_t b = 0, std::uint32_t c = 0) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), tag,
                      a, b, c};
    return std::mt19937_64(seq);
}

constexpr std::uint32_t kSubjectTag = 0x5u;
constexpr std::uint32_t kSessionTag = 0x7u;
constexpr std::uint32_t kNoiseTag = 0xBu;

double uniform(std::mt19937_64& rng, double lo, double hi) {
    return lo + (hi - lo) * std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

// Random start phase of a (subject, style) session, shared by all its sensors.
double session_offset(const SubjectProfile& subject, StyleLabel style, double stride_hz) {
    auto rng = derive_stream(subject.seed, kSessionTag, static_cast<std::uint32_t>(subject.index),
                             static_cast<std::uint32_t>(label_index(style)));
    return uniform(rng, 0.0, 1.0 / stride_hz);
}

StyleParams build_params(const StyleModifier& m, const SubjectProfile& subject,
                         const NeutralBaseline& base, SensorLocation sensor,
                         const std::array<double, kNumKnobs>& eps) {
    auto e = [&](Knob k) { return eps[static_cast<int>(k)]; };
    const int g = static_cast<int>(group_of(sensor));
    const Side side = side_of(sensor);
    const double alpha = subject.amplitude_scale;

    StyleParams p;
    p.stride_freq_hz = subject.stride_freq_hz * m.stride * e(Knob::stride_mult);

    const double lateral_mod = (side == Side::centre) ? m.lateral_com : m.lateral_limb;
    const std::array<double, kAxes> fundamental = {
        alpha * base.fore_aft[g] * m.fore_aft * e(Knob::fore_aft_amp),
        alpha * base.lateral[g] * lateral_mod * e(Knob::lateral_amp),
        alpha * base.vertical[g] * m.vertical * e(Knob::vertical_amp),
    };
    constexpr std::array<double, kAxes> axis_offset = {std::numbers::pi / 2, 0.0,
                                                       -std::numbers::pi / 2};
    const double side_shift = (side == Side::right) ? std::numbers::pi : 0.0;
    const double lateral_shift =
        (side == Side::centre) ? 0.0 : m.lateral_phase_rad * e(Knob::lateral_phase);

    for (int a = 0; a < kAxes; ++a) {
        for (int h = 0; h < kHarmonics; ++h) {
            p.axes[a].amplitude[h] = fundamental[a] / (h + 1);
            p.axes[a].phase[h] =
                axis_offset[a] + (h + 1) * side_shift + (a == 1 ? lateral_shift : 0.0);
        }
    }
    p.impact_g = alpha * base.impact[g] * m.impact * e(Knob::impact_mag);
    p.decay_s = base.decay_s * m.decay * e(Knob::impact_decay);
    p.ring_hz = base.ring_hz * m.ring_freq * e(Knob::impact_freq);
    if (g == static_cast<int>(Group::feet)) {
        const double sign = (side == Side::left) ? 1.0 : -1.0;
        p.lateral_dc_g = sign * m.lateral_dc_g * e(Knob::lateral_dc);
    }
    return p;
}

ImuRecording synthesize(const SubjectProfile& subject, StyleLabel style, SensorLocation sensor,
                        const GeneratorConfig& cfg, bool with_noise) {
    const StyleParams p = style_params(style, subject, cfg)[sensor_index(sensor)];
    const std::size_t n = cfg.n_samples();
    const double f = p.stride_freq_hz;
    const double t0 = session_offset(subject, style, f);

    ImuRecording rec;
    rec.subject_id = subject.subject_id;
    rec.style = style;
    rec.sensor = sensor;
    rec.fs = cfg.fs;
    rec.samples.resize(n);

    // sin(h*theta + phi) = sin(h*theta) cos(phi) + cos(h*theta) sin(phi)
    std::array<std::array<double, kHarmonics>, kAxes> cphi{}, sphi{};
    for (int a = 0; a < kAxes; ++a) {
        for (int h = 0; h < kHarmonics; ++h) {
            cphi[a][h] = p.axes[a].amplitude[h] * std::cos(p.axes[a].phase[h]);
            sphi[a][h] = p.axes[a].amplitude[h] * std::sin(p.axes[a].phase[h]);
        }
    }
    for (std::size_t i = 0; i < n; ++i) {
        const double u = static_cast<double>(i) / cfg.fs + t0;
        const double theta = kTwoPi * f * u;
        std::array<double, kHarmonics> sh{}, ch{};
        sh[0] = std::sin(theta);
        ch[0] = std::cos(theta);
        for (int h = 1; h < kHarmonics; ++h) {
            sh[h] = sh[h - 1] * ch[0] + ch[h - 1] * sh[0];
            ch[h] = ch[h - 1] * ch[0] - sh[h - 1] * sh[0];
        }
        double v[kAxes];
        for (int a = 0; a < kAxes; ++a) {
            double acc = 0.0;
            for (int h = 0; h < kHarmonics; ++h) acc += sh[h] * cphi[a][h] + ch[h] * sphi[a][h];
            v[a] = acc;
        }
        rec.samples[i] = {v[0], v[1] + p.lateral_dc_g, v[2]};
    }

    // Impact transients at step times u_k = k / (2 f); even k are left steps.
    // Each transient lasts until the next step so they never overlap.
    const Side side = side_of(sensor);
    const double step = 1.0 / (2.0 * f);
    const double end_u = static_cast<double>(n) / cfg.fs + t0;
    for (long k = static_cast<long>(std::floor(t0 / step)); k * step < end_u; ++k) {
        const bool left_step = (k % 2) == 0;
        double w = kComCoupling;
        if (side != Side::centre) {
            w = ((side == Side::left) == left_step) ? 1.0 : kOppositeSideCoupling;
        }
        const double uk = k * step;
        const double first_t = std::max(0.0, uk - t0);
        auto i = static_cast<std::size_t>(std::ceil(first_t * cfg.fs - 1e-9));
        for (; i < n; ++i) {
            const double dt = static_cast<double>(i) / cfg.fs + t0 - uk;
            if (dt >= step) break;
            if (dt < 0.0) continue;
            const double pulse =
                w * p.impact_g * std::exp(-dt / p.decay_s) * std::sin(kTwoPi * p.ring_hz * dt);
            rec.samples[i].az += pulse;
            rec.samples[i].ax += kImpactForeAft * pulse;
        }
    }

    if (with_noise && subject.noise_sigma_g > 0.0) {
        auto rng = derive_stream(subject.seed, kNoiseTag, static_cast<std::uint32_t>(subject.index),
                                 static_cast<std::uint32_t>(label_index(style)),
                                 static_cast<std::uint32_t>(sensor_index(sensor)));
        std::normal_distribution<double> noise(0.0, subject.noise_sigma_g);
        for (auto& s : rec.samples) {
            s.ax += noise(rng);
            s.ay += noise(rng);
            s.az += noise(rng);
        }
    }
    return rec;
}

std::string subject_name(int index, int n_subjects) {
    char buf[16];
    std::snprintf(buf, sizeof buf, n_subjects > 99 ? "S%03d" : "S%02d", index + 1);
    return buf;
}

}  // namespace

std::array<StyleModifier, kNumStyles> GeneratorConfig::default_modifiers() {
    std::array<StyleModifier, kNumStyles> m{};
    auto& egg = m[label_index(StyleLabel::egg_beater)];
    egg.lateral_limb = 2.5;
    egg.lateral_phase_rad = std::numbers::pi / 2;

    m[label_index(StyleLabel::bouncing)].vertical = 1.8;

    auto& heel = m[label_index(StyleLabel::heel_strike)];
    heel.impact = 1.6;
    heel.decay = 0.5;
    heel.ring_freq = 1.5;

    auto& toe = m[label_index(StyleLabel::toe_strike)];
    toe.impact = 0.6;
    toe.decay = 1.5;
    toe.fore_aft = 1.2;

    auto& lng = m[label_index(StyleLabel::long_stride)];
    lng.stride = 0.8;
    lng.fore_aft = 1.4;

    auto& shrt = m[label_index(StyleLabel::short_stride)];
    shrt.stride = 1.25;
    shrt.fore_aft = 0.7;

    auto& wide = m[label_index(StyleLabel::wide_stance)];
    wide.lateral_dc_g = 0.2;
    wide.lateral_com = 1.5;

    auto& narrow = m[label_index(StyleLabel::narrow_stance)];
    narrow.lateral_limb = 0.5;
    narrow.lateral_com = 0.5;
    narrow.lateral_dc_g = -0.05;
    return m;
}

std::size_t GeneratorConfig::n_samples() const {
    const double n = duration_s * fs;
    if (n <= 0.0 || std::abs(n - std::round(n)) > 1e-9 * n) {
        throw std::invalid_argument("duration_s * fs must be a positive integer");
    }
    return static_cast<std::size_t>(std::round(n));
}

void to_json(json& j, const GeneratorConfig& c) {
    j = json{{"n_subjects", c.n_subjects},
             {"duration_s", c.duration_s},
             {"fs", c.fs},
             {"personalization", c.personalization},
             {"seed", c.seed}};
    j["baseline"] = {{"vertical", c.baseline.vertical}, {"fore_aft", c.baseline.fore_aft},
                     {"lateral", c.baseline.lateral},   {"impact", c.baseline.impact},
                     {"decay_s", c.baseline.decay_s},   {"ring_hz", c.baseline.ring_hz}};
    json mods = json::object();
    for (auto s : kAllStyles) {
        const auto& m = c.modifiers[label_index(s)];
        mods[std::string(to_string(s))] = {
            {"vertical", m.vertical},         {"fore_aft", m.fore_aft},
            {"lateral_limb", m.lateral_limb}, {"lateral_com", m.lateral_com},
            {"lateral_phase_rad", m.lateral_phase_rad}, {"impact", m.impact},
            {"decay", m.decay},               {"ring_freq", m.ring_freq},
            {"stride", m.stride},             {"lateral_dc_g", m.lateral_dc_g}};
    }
    j["modifiers"] = std::move(mods);
}

void from_json(const json& j, GeneratorConfig& c) {
    c.n_subjects = j.value("n_subjects", c.n_subjects);
    c.duration_s = j.value("duration_s", c.duration_s);
    c.fs = j.value("fs", c.fs);
    c.personalization = j.value("personalization", c.personalization);
    c.seed = j.value("seed", c.seed);
    if (j.contains("baseline")) {
        const auto& b = j["baseline"];
        c.baseline.vertical = b.value("vertical", c.baseline.vertical);
        c.baseline.fore_aft = b.value("fore_aft", c.baseline.fore_aft);
        c.baseline.lateral = b.value("lateral", c.baseline.lateral);
        c.baseline.impact = b.value("impact", c.baseline.impact);
        c.baseline.decay_s = b.value("decay_s", c.baseline.decay_s);
        c.baseline.ring_hz = b.value("ring_hz", c.baseline.ring_hz);
    }
    if (j.contains("modifiers")) {
        for (const auto& [name, mj] : j["modifiers"].items()) {
            auto style = parse_style(name);
            if (!style) throw std::invalid_argument("unknown style in modifiers: " + name);
            auto& m = c.modifiers[label_index(*style)];
            m.vertical = mj.value("vertical", m.vertical);
            m.fore_aft = mj.value("fore_aft", m.fore_aft);
            m.lateral_limb = mj.value("lateral_limb", m.lateral_limb);
            m.lateral_com = mj.value("lateral_com", m.lateral_com);
            m.lateral_phase_rad = mj.value("lateral_phase_rad", m.lateral_phase_rad);
            m.impact = mj.value("impact", m.impact);
            m.decay = mj.value("decay", m.decay);
            m.ring_freq = mj.value("ring_freq", m.ring_freq);
            m.stride = mj.value("stride", m.stride);
            m.lateral_dc_g = mj.value("lateral_dc_g", m.lateral_dc_g);
        }
    }
    if (c.n_subjects < 1) throw std::invalid_argument("n_subjects must be >= 1");
    if (c.personalization < 0.0) throw std::invalid_argument("personalization must be >= 0");
    if (c.fs <= 0.0) throw std::invalid_argument("fs must be positive");
    (void)c.n_samples();
}

SubjectProfile make_subject(int index, const GeneratorConfig& cfg) {
    if (index < 0 || index >= cfg.n_subjects) {
        throw ContractError("subject index out of range");
    }
    auto rng = derive_stream(cfg.seed, kSubjectTag, static_cast<std::uint32_t>(index));
    SubjectProfile s;
    s.index = index;
    s.subject_id = subject_name(index, cfg.n_subjects);
    s.seed = cfg.seed;
    s.stride_freq_hz = uniform(rng, 1.2, 1.6);
    s.amplitude_scale = uniform(rng, 0.8, 1.2);
    s.noise_sigma_g = uniform(rng, 0.05, 0.15);
    const double p = cfg.personalization;
    for (auto& style : s.personalization) {
        for (auto& eps : style) {
            const double u = uniform(rng, 0.0, 1.0);
            eps = 1.0 + p * (2.0 * u - 1.0);
        }
    }
    return s;
}

std::array<StyleParams, kNumSensors> style_params(StyleLabel style, const SubjectProfile& subject,
                                                  const GeneratorConfig& cfg) {
    std::array<StyleParams, kNumSensors> out{};
    for (auto sensor : kAllSensors) {
        out[sensor_index(sensor)] = build_params(cfg.modifiers[label_index(style)], subject,
                                                 cfg.baseline, sensor,
                                                 subject.personalization[label_index(style)]);
    }
    return out;
}

std::array<StyleParams, kNumSensors> neutral_params(const SubjectProfile& subject,
                                                    const GeneratorConfig& cfg) {
    std::array<double, kNumKnobs> ones;
    ones.fill(1.0);
    std::array<StyleParams, kNumSensors> out{};
    for (auto sensor : kAllSensors) {
        out[sensor_index(sensor)] =
            build_params(StyleModifier{}, subject, cfg.baseline, sensor, ones);
    }
    return out;
}

ImuRecording generate_recording(const SubjectProfile& subject, StyleLabel style,
                                SensorLocation sensor, const GeneratorConfig& cfg) {
    return synthesize(subject, style, sensor, cfg, true);
}

ImuRecording generate_clean_recording(const SubjectProfile& subject, StyleLabel style,
                                      SensorLocation sensor, const GeneratorConfig& cfg) {
    return synthesize(subject, style, sensor, cfg, false);
}

Dataset generate_dataset(const GeneratorConfig& cfg) {
    Dataset d;
    d.recordings.reserve(static_cast<std::size_t>(cfg.n_subjects) * kNumStyles * kNumSensors);
    for (int i = 0; i < cfg.n_subjects; ++i) {
        const SubjectProfile subject = make_subject(i, cfg);
        // Anthropometrics are recorded for completeness; no model reads them.
        auto rng = derive_stream(cfg.seed, kSubjectTag + 100, static_cast<std::uint32_t>(i));
        SubjectMeta meta;
        meta.subject_id = subject.subject_id;
        meta.height_m = std::round(uniform(rng, 1.55, 1.90) * 100.0) / 100.0;
        meta.weight_kg = std::round(uniform(rng, 50.0, 85.0) * 10.0) / 10.0;
        meta.age_years = std::floor(uniform(rng, 20.0, 27.0));
        meta.sex = (i % 2 == 0) ? "F" : "M";
        d.subjects.push_back(std::move(meta));
        for (auto style : kAllStyles) {
            for (auto sensor : kAllSensors) {
                d.recordings.push_back(generate_recording(subject, style, sensor, cfg));
            }
        }
    }
    return d;
}

std::filesystem::path write_generated_dataset(const GeneratorConfig& cfg,
                                              const std::filesystem::path& dir, bool overwrite) {
    namespace fs = std::filesystem;
    if (fs::exists(dir) && !fs::is_empty(dir) && !overwrite) {
        throw OutputCollisionError("output directory " + dir.string() +
                                   " is not empty (use overwrite)");
    }
    const auto manifest = write_dataset(generate_dataset(cfg), dir);
    std::ofstream(dir / "generator.json", std::ios::trunc) << json(cfg).dump(2) << '\n';
    return manifest;
}

}  // namespace runstyle
