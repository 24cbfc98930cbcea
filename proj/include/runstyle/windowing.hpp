#pragma once

#include <array>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "runstyle/domain.hpp"

namespace runstyle {

inline constexpr double kWindowSeconds = 10.0;
inline constexpr double kWindowOverlap = 0.5;
inline constexpr int kSubSegments = 8;

/// A fixed-length window into a recording. Holds shared ownership of the
/// recording, so segments stay valid after the table that made them is gone.
class Segment {
public:
    Segment(std::shared_ptr<const ImuRecording> recording, std::size_t start, std::size_t length);

    const std::string& subject_id() const { return recording_->subject_id; }
    StyleLabel style() const { return recording_->style; }
    SensorLocation sensor() const { return recording_->sensor; }
    double fs() const { return recording_->fs; }
    std::size_t start() const { return start_; }
    std::size_t size() const { return length_; }
    std::span<const Sample> data() const {
        return std::span<const Sample>(recording_->samples).subspan(start_, length_);
    }
    const ImuRecording& recording() const { return *recording_; }

private:
    std::shared_ptr<const ImuRecording> recording_;
    std::size_t start_;
    std::size_t length_;
};

struct SubSegment {
    std::span<const Sample> data;
    int position = 0;
};

/// Slides a window of `window_s` seconds with fractional `overlap`. Trailing
/// samples that do not fill a window are dropped.
std::vector<Segment> segment(std::shared_ptr<const ImuRecording> recording,
                             double window_s = kWindowSeconds, double overlap = kWindowOverlap);

/// Splits a segment into `kSubSegments` contiguous, non-overlapping slices.
/// Requires the segment length to be `window_s * fs` for the 10 s window.
std::vector<SubSegment> subsegment(const Segment& seg);

struct SegmentKey {
    std::string subject_id;
    StyleLabel style = StyleLabel::egg_beater;
    std::size_t index = 0;

    bool operator==(const SegmentKey&) const = default;
};

/// All segments of a dataset, index-aligned across the five sensors: row i of
/// every sensor list covers the same time span of the same session.
class SegmentTable {
public:
    const std::vector<SegmentKey>& keys() const { return keys_; }
    const std::vector<Segment>& segments(SensorLocation sensor) const {
        return by_sensor_[sensor_index(sensor)];
    }
    std::size_t size() const { return keys_.size(); }
    int label(std::size_t row) const { return label_index(keys_[row].style); }
    std::vector<int> labels() const;
    /// Distinct subject ids in key order.
    std::vector<std::string> subjects() const;
    std::size_t segment_length() const { return segment_length_; }

private:
    friend SegmentTable segment_dataset(std::shared_ptr<const Dataset>, double, double);

    std::vector<SegmentKey> keys_;
    std::array<std::vector<Segment>, kNumSensors> by_sensor_;
    std::size_t segment_length_ = 0;
};

/// Validates the dataset (throws ContractError listing violations) and
/// segments every recording. Rows are ordered by (subject, style, index).
SegmentTable segment_dataset(std::shared_ptr<const Dataset> d, double window_s = kWindowSeconds,
                             double overlap = kWindowOverlap);

}  // namespace runstyle
