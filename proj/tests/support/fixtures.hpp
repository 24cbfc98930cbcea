#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

#include "runstyle/domain.hpp"
#include "runstyle/windowing.hpp"

namespace fixtures {

/// Seeded white-noise segment of `n` samples, with per-axis offsets and scales
/// so no axis is centred on zero.
inline runstyle::Segment random_segment(std::uint64_t seed, std::size_t n = 5000,
                                        runstyle::StyleLabel style = runstyle::StyleLabel::egg_beater) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> offset(-2.0, 2.0), scale(0.1, 3.0);
    std::normal_distribution<double> noise(0.0, 1.0);
    auto rec = std::make_shared<runstyle::ImuRecording>();
    rec->subject_id = "S01";
    rec->style = style;
    const double o[3] = {offset(rng), offset(rng), offset(rng)};
    const double s[3] = {scale(rng), scale(rng), scale(rng)};
    rec->samples.resize(n);
    for (auto& smp : rec->samples) {
        smp.ax = o[0] + s[0] * noise(rng);
        smp.ay = o[1] + s[1] * noise(rng);
        smp.az = o[2] + s[2] * noise(rng);
    }
    return runstyle::Segment(rec, 0, n);
}

inline runstyle::Segment segment_from(std::vector<runstyle::Sample> samples, double fs = 500.0) {
    auto rec = std::make_shared<runstyle::ImuRecording>();
    rec->fs = fs;
    rec->samples = std::move(samples);
    const std::size_t n = rec->samples.size();
    return runstyle::Segment(rec, 0, n);
}

/// A complete dataset where every recording holds `n` samples of a simple
/// per-style signal.
inline runstyle::Dataset constant_dataset(int subjects, std::size_t n) {
    runstyle::Dataset d;
    for (int s = 0; s < subjects; ++s) {
        const std::string id = "S" + std::string(s < 9 ? "0" : "") + std::to_string(s + 1);
        d.subjects.push_back({id, {}, {}, {}, {}});
        for (auto style : runstyle::kAllStyles) {
            for (auto sensor : runstyle::kAllSensors) {
                runstyle::ImuRecording r;
                r.subject_id = id;
                r.style = style;
                r.sensor = sensor;
                const double v = runstyle::label_index(style);
                r.samples.assign(n, runstyle::Sample{v, -v, 1.0});
                d.recordings.push_back(std::move(r));
            }
        }
    }
    return d;
}

/// Fresh empty directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static int counter = 0;
        path_ = std::filesystem::temp_directory_path() /
                ("runstyle_test_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

}  // namespace fixtures
