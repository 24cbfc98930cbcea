#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>

#include "runstyle/domain.hpp"

namespace runstyle {

namespace fs = std::filesystem;

inline constexpr std::string_view kCsvHeader = "t,ax,ay,az";

class IngestError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Header or cell that does not follow the CSV contract. `line` is 1-based.
class FormatError : public IngestError {
public:
    FormatError(const std::string& path, std::size_t line, const std::string& what);
    std::size_t line() const { return line_; }

private:
    std::size_t line_;
};

/// Well-formed but unusable values (NaN/inf, count mismatches).
class DataError : public IngestError {
public:
    using IngestError::IngestError;
};

/// Files referenced by a manifest could not be found or opened.
class LoadError : public IngestError {
public:
    using IngestError::IngestError;
};

class SchemaError : public IngestError {
public:
    using IngestError::IngestError;
};

class UnitMismatchError : public SchemaError {
public:
    using SchemaError::SchemaError;
};

struct ManifestEntry {
    std::string subject_id;
    std::string style;
    std::string sensor;
    std::string path;  // relative to the manifest directory
    double fs = kDefaultSampleRate;
    std::size_t n_samples = 0;
};

/// Conventional file name `S{subject}_{style}_{sensor}.csv`. Subject ids that
/// already start with 'S' are not prefixed twice.
std::string conventional_file_name(const std::string& subject_id, StyleLabel style,
                                   SensorLocation sensor);

/// Reads a `t,ax,ay,az` file. Subject/style/sensor are recovered from the
/// conventional file name when it matches, otherwise left at their defaults
/// for the caller to fill in.
ImuRecording read_imu_csv(const fs::path& path, double fs = kDefaultSampleRate);

/// Writes the CSV contract with 9 significant digits. Byte output is a pure
/// function of the recording.
void write_imu_csv(const ImuRecording& recording, const fs::path& path);

/// Loads the manifest and every recording it references, then truncates each
/// (subject, style) sensor group to its shortest member.
Dataset load_manifest(const fs::path& path, std::string_view expected_unit = kAccelUnit);

/// Writes one CSV per recording plus `manifest.json` into `dir`; returns the
/// manifest path.
fs::path write_dataset(const Dataset& d, const fs::path& dir);

}  // namespace runstyle
