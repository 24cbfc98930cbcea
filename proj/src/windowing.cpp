#include "runstyle/windowing.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

namespace runstyle {

namespace {

std::size_t window_samples(double window_s, double fs) {
    const double w = window_s * fs;
    const double rounded = std::round(w);
    if (w <= 0.0 || std::abs(w - rounded) > 1e-9 * std::max(1.0, w)) {
        throw std::invalid_argument("window length " + std::to_string(w) +
                                    " samples is not a positive integer");
    }
    return static_cast<std::size_t>(rounded);
}

}  // namespace

Segment::Segment(std::shared_ptr<const ImuRecording> recording, std::size_t start,
                 std::size_t length)
    : recording_(std::move(recording)), start_(start), length_(length) {
    if (!recording_ || start_ + length_ > recording_->samples.size()) {
        throw ContractError("segment exceeds recording bounds");
    }
}

std::vector<Segment> segment(std::shared_ptr<const ImuRecording> recording, double window_s,
                             double overlap) {
    if (!(overlap >= 0.0 && overlap < 1.0)) {
        throw std::invalid_argument("overlap must lie in [0, 1)");
    }
    const std::size_t w = window_samples(window_s, recording->fs);
    const auto hop = static_cast<std::size_t>(std::floor(static_cast<double>(w) * (1.0 - overlap)));
    if (hop == 0) throw std::invalid_argument("overlap leaves a zero hop");

    std::vector<Segment> out;
    const std::size_t n = recording->samples.size();
    if (n < w) return out;
    out.reserve((n - w) / hop + 1);
    for (std::size_t start = 0; start + w <= n; start += hop) {
        out.emplace_back(recording, start, w);
    }
    return out;
}

std::vector<SubSegment> subsegment(const Segment& seg) {
    const std::size_t expected = window_samples(kWindowSeconds, seg.fs());
    if (seg.size() != expected || expected % kSubSegments != 0) {
        throw ContractError("subsegment: segment has " + std::to_string(seg.size()) +
                            " samples, expected " + std::to_string(expected));
    }
    const std::size_t len = expected / kSubSegments;
    std::vector<SubSegment> out;
    out.reserve(kSubSegments);
    for (int k = 0; k < kSubSegments; ++k) {
        out.push_back({seg.data().subspan(static_cast<std::size_t>(k) * len, len), k});
    }
    return out;
}

std::vector<int> SegmentTable::labels() const {
    std::vector<int> out(keys_.size());
    for (std::size_t i = 0; i < keys_.size(); ++i) out[i] = label(i);
    return out;
}

std::vector<std::string> SegmentTable::subjects() const {
    std::vector<std::string> out;
    for (const auto& k : keys_) {
        if (out.empty() || out.back() != k.subject_id) out.push_back(k.subject_id);
    }
    return out;
}

SegmentTable segment_dataset(std::shared_ptr<const Dataset> d, double window_s, double overlap) {
    const double fs = d->recordings.empty() ? kDefaultSampleRate : d->recordings.front().fs;
    const auto report = validate_dataset(*d, fs);
    if (!report.empty()) {
        std::string msg = "dataset failed validation:";
        for (const auto& v : report) msg += "\n  " + v.key + ": " + v.rule;
        throw ContractError(msg);
    }

    // (subject, style) -> recording index per sensor
    std::map<std::pair<std::string, int>, std::array<std::size_t, kNumSensors>> groups;
    for (std::size_t i = 0; i < d->recordings.size(); ++i) {
        const auto& r = d->recordings[i];
        groups[{r.subject_id, label_index(r.style)}][sensor_index(r.sensor)] = i;
    }

    SegmentTable table;
    table.segment_length_ = window_samples(window_s, fs);
    for (const auto& [group, rec_ids] : groups) {
        std::size_t count = 0;
        for (int s = 0; s < kNumSensors; ++s) {
            std::shared_ptr<const ImuRecording> rec(d, &d->recordings[rec_ids[s]]);
            auto segs = segment(rec, window_s, overlap);
            count = segs.size();
            auto& dst = table.by_sensor_[s];
            dst.insert(dst.end(), segs.begin(), segs.end());
        }
        for (std::size_t k = 0; k < count; ++k) {
            table.keys_.push_back({group.first, index_label(group.second), k});
        }
    }
    return table;
}

}  // namespace runstyle
