#include "runstyle/ingest.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <tuple>

#include "json.hpp"

namespace runstyle {

using nlohmann::json;

FormatError::FormatError(const std::string& path, std::size_t line, const std::string& what)
    : IngestError(path + ":" + std::to_string(line) + ": " + what), line_(line) {}

namespace {

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw LoadError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void append_number(std::string& out, double v) {
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 9);
    out.append(buf, res.ptr);
}

// Parses one CSV cell; returns false if it is not a complete number.
bool parse_cell(std::string_view cell, double& out) {
    while (!cell.empty() && (cell.front() == ' ' || cell.front() == '\t')) cell.remove_prefix(1);
    while (!cell.empty() && (cell.back() == ' ' || cell.back() == '\t' || cell.back() == '\r')) {
        cell.remove_suffix(1);
    }
    if (cell.empty()) return false;
    if (cell.front() == '+') cell.remove_prefix(1);
    auto res = std::from_chars(cell.data(), cell.data() + cell.size(), out);
    return res.ec == std::errc() && res.ptr == cell.data() + cell.size();
}

void fill_from_file_name(ImuRecording& rec, const fs::path& path) {
    // S{subject}_{style}_{sensor}.csv; style names contain underscores, so
    // split off the subject at the first '_' and the sensor at the last.
    const std::string stem = path.stem().string();
    const auto first = stem.find('_');
    const auto last = stem.rfind('_');
    if (first == std::string::npos || last == first) return;
    auto style = parse_style(std::string_view(stem).substr(first + 1, last - first - 1));
    auto sensor = parse_sensor(std::string_view(stem).substr(last + 1));
    if (!style || !sensor) return;
    rec.subject_id = stem.substr(0, first);
    rec.style = *style;
    rec.sensor = *sensor;
}

}  // namespace

std::string conventional_file_name(const std::string& subject_id, StyleLabel style,
                                   SensorLocation sensor) {
    std::string name = (!subject_id.empty() && subject_id.front() == 'S') ? subject_id
                                                                           : "S" + subject_id;
    name += '_';
    name += to_string(style);
    name += '_';
    name += to_string(sensor);
    name += ".csv";
    return name;
}

ImuRecording read_imu_csv(const fs::path& path, double fs) {
    const std::string text = read_file(path);
    const std::string where = path.string();

    ImuRecording rec;
    rec.fs = fs;
    fill_from_file_name(rec, path);

    std::size_t pos = 0;
    std::size_t line_no = 0;
    auto next_line = [&](std::string_view& line) {
        if (pos >= text.size()) return false;
        auto end = text.find('\n', pos);
        if (end == std::string::npos) end = text.size();
        line = std::string_view(text).substr(pos, end - pos);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        pos = end + 1;
        ++line_no;
        return true;
    };

    std::string_view line;
    if (!next_line(line) || line != kCsvHeader) {
        throw FormatError(where, 1, "expected header \"" + std::string(kCsvHeader) + "\"");
    }

    while (next_line(line)) {
        if (line.empty()) continue;
        double values[4];
        int n = 0;
        std::size_t start = 0;
        while (true) {
            auto comma = line.find(',', start);
            auto cell = line.substr(start, comma == std::string_view::npos ? line.npos : comma - start);
            if (n >= 4 || !parse_cell(cell, values[n])) {
                throw FormatError(where, line_no,
                                  "row " + std::to_string(line_no) + ": expected 4 numeric cells");
            }
            ++n;
            if (comma == std::string_view::npos) break;
            start = comma + 1;
        }
        if (n != 4) {
            throw FormatError(where, line_no,
                              "row " + std::to_string(line_no) + ": expected 4 numeric cells");
        }
        for (double v : values) {
            if (!std::isfinite(v)) {
                throw DataError(where + ":" + std::to_string(line_no) + ": non-finite value");
            }
        }
        rec.samples.push_back({values[1], values[2], values[3]});
    }
    return rec;
}

void write_imu_csv(const ImuRecording& recording, const fs::path& path) {
    if (recording.samples.empty()) {
        throw DataError("refusing to write empty recording to " + path.string());
    }
    std::string out;
    out.reserve(recording.samples.size() * 48 + 16);
    out.append(kCsvHeader);
    out.push_back('\n');
    for (std::size_t i = 0; i < recording.samples.size(); ++i) {
        const auto& s = recording.samples[i];
        append_number(out, static_cast<double>(i) / recording.fs);
        out.push_back(',');
        append_number(out, s.ax);
        out.push_back(',');
        append_number(out, s.ay);
        out.push_back(',');
        append_number(out, s.az);
        out.push_back('\n');
    }
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IngestError("cannot open for writing: " + path.string());
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw IngestError("write failed: " + path.string());
}

Dataset load_manifest(const fs::path& path, std::string_view expected_unit) {
    json doc;
    try {
        doc = json::parse(read_file(path));
    } catch (const json::parse_error& e) {
        throw SchemaError(path.string() + ": " + e.what());
    }

    const std::string unit = doc.value("unit", std::string(kAccelUnit));
    if (unit != expected_unit) {
        throw UnitMismatchError(path.string() + ": manifest unit \"" + unit +
                                "\" but expected \"" + std::string(expected_unit) + "\"");
    }
    if (!doc.contains("fs") || !doc.contains("recordings")) {
        throw SchemaError(path.string() + ": manifest needs \"fs\" and \"recordings\"");
    }
    const double manifest_fs = doc.at("fs").get<double>();
    const fs::path base = path.parent_path();

    Dataset d;
    for (const auto& s : doc.value("subjects", json::array())) {
        SubjectMeta meta;
        meta.subject_id = s.at("subject_id").get<std::string>();
        if (s.contains("height_m")) meta.height_m = s["height_m"].get<double>();
        if (s.contains("weight_kg")) meta.weight_kg = s["weight_kg"].get<double>();
        if (s.contains("age_years")) meta.age_years = s["age_years"].get<double>();
        if (s.contains("sex")) meta.sex = s["sex"].get<std::string>();
        d.subjects.push_back(std::move(meta));
    }

    std::vector<ManifestEntry> entries;
    std::set<std::tuple<std::string, std::string, std::string>> keys;
    std::vector<std::string> missing;
    for (const auto& e : doc.at("recordings")) {
        ManifestEntry m;
        try {
            m.subject_id = e.at("subject_id").get<std::string>();
            m.style = e.at("style").get<std::string>();
            m.sensor = e.at("sensor").get<std::string>();
            m.path = e.at("path").get<std::string>();
            m.fs = e.value("fs", manifest_fs);
            m.n_samples = e.value("n_samples", std::size_t{0});
        } catch (const json::exception& ex) {
            throw SchemaError(path.string() + ": bad recording entry: " + ex.what());
        }
        if (!parse_style(m.style)) throw SchemaError("unknown style \"" + m.style + "\"");
        if (!parse_sensor(m.sensor)) throw SchemaError("unknown sensor \"" + m.sensor + "\"");
        if (m.fs != manifest_fs) {
            throw SchemaError(m.path + ": fs " + std::to_string(m.fs) +
                              " differs from manifest fs (no resampling)");
        }
        if (!keys.emplace(m.subject_id, m.style, m.sensor).second) {
            throw SchemaError("duplicate recording key " + m.subject_id + "/" + m.style + "/" +
                              m.sensor);
        }
        if (!fs::exists(base / m.path)) missing.push_back((base / m.path).string());
        entries.push_back(std::move(m));
    }
    if (!missing.empty()) {
        std::string msg = "missing recording files:";
        for (const auto& p : missing) msg += "\n  " + p;
        throw LoadError(msg);
    }

    d.recordings.reserve(entries.size());
    for (const auto& m : entries) {
        ImuRecording rec = read_imu_csv(base / m.path, m.fs);
        rec.subject_id = m.subject_id;
        rec.style = *parse_style(m.style);
        rec.sensor = *parse_sensor(m.sensor);
        if (m.n_samples != 0 && rec.samples.size() != m.n_samples) {
            throw DataError(m.path + ": manifest says " + std::to_string(m.n_samples) +
                            " samples, file has " + std::to_string(rec.samples.size()));
        }
        d.recordings.push_back(std::move(rec));
    }

    // Alignment: truncate each (subject, style) group to its shortest sensor.
    std::map<std::pair<std::string, int>, std::size_t> shortest;
    for (const auto& r : d.recordings) {
        auto key = std::make_pair(r.subject_id, label_index(r.style));
        auto it = shortest.find(key);
        if (it == shortest.end()) {
            shortest.emplace(key, r.samples.size());
        } else {
            it->second = std::min(it->second, r.samples.size());
        }
    }
    for (auto& r : d.recordings) {
        r.samples.resize(shortest.at({r.subject_id, label_index(r.style)}));
    }
    return d;
}

fs::path write_dataset(const Dataset& d, const fs::path& dir) {
    fs::create_directories(dir);
    json manifest;
    manifest["unit"] = std::string(kAccelUnit);
    manifest["fs"] = d.recordings.empty() ? kDefaultSampleRate : d.recordings.front().fs;
    json subjects = json::array();
    for (const auto& s : d.subjects) {
        json j;
        j["subject_id"] = s.subject_id;
        if (s.height_m) j["height_m"] = *s.height_m;
        if (s.weight_kg) j["weight_kg"] = *s.weight_kg;
        if (s.age_years) j["age_years"] = *s.age_years;
        if (s.sex) j["sex"] = *s.sex;
        subjects.push_back(std::move(j));
    }
    manifest["subjects"] = std::move(subjects);
    json recs = json::array();
    for (const auto& r : d.recordings) {
        const std::string name = conventional_file_name(r.subject_id, r.style, r.sensor);
        write_imu_csv(r, dir / name);
        recs.push_back({{"subject_id", r.subject_id},
                        {"style", std::string(to_string(r.style))},
                        {"sensor", std::string(to_string(r.sensor))},
                        {"path", name},
                        {"fs", r.fs},
                        {"n_samples", r.samples.size()}});
    }
    manifest["recordings"] = std::move(recs);
    const fs::path manifest_path = dir / "manifest.json";
    std::ofstream out(manifest_path, std::ios::trunc);
    if (!out) throw IngestError("cannot open for writing: " + manifest_path.string());
    out << manifest.dump(2) << '\n';
    return manifest_path;
}

}  // namespace runstyle
