#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"
#include "runstyle/classical.hpp"
#include "runstyle/deepnet.hpp"
#include "runstyle/windowing.hpp"

namespace runstyle {

enum class Scheme { random_segments, leave_subjects_out };

std::string_view to_string(Scheme s);
std::optional<Scheme> parse_scheme(std::string_view s);

/// Row indices into a SegmentTable. A row selects the aligned segment of
/// every sensor.
struct Trial {
    std::vector<std::size_t> train, val, test;
    std::vector<std::string> test_subjects;  // leave_subjects_out only
};

struct SplitPlan {
    Scheme scheme = Scheme::random_segments;
    std::uint64_t seed = 0;
    std::vector<Trial> trials;
};

/// Repeated random subsampling: each trial independently draws
/// floor(test_frac * n) test rows, then floor(val_frac * rest) validation rows.
SplitPlan plan_random_segment_split(const SegmentTable& table, int trials = 5, double test_frac = 0.2,
                                    double val_frac = 0.1, std::uint64_t seed = 0);

/// Shuffles the subjects and deals them into ceil(1 / test_subject_frac)
/// disjoint test groups, one trial per group.
SplitPlan plan_leave_subjects_out(const SegmentTable& table, double test_subject_frac = 0.2,
                                  std::uint64_t seed = 0, double val_frac = 0.1);

nlohmann::json plan_to_json(const SplitPlan& plan, const SegmentTable& table);

struct Metrics {
    double accuracy = 0.0;
    double macro_f1 = 0.0;
    /// Rows are truth, columns are predictions.
    std::array<std::array<long, kNumStyles>, kNumStyles> confusion{};

    long total() const;
    long trace() const;
};

Metrics compute_metrics(std::span<const int> truth, std::span<const int> predicted);

/// Five sensor columns in SensorLocation order plus the fused column.
struct ColumnMetrics {
    std::array<Metrics, kNumSensors> sensors{};
    Metrics fusion;

    const Metrics& column(int c) const { return c < kNumSensors ? sensors[static_cast<std::size_t>(c)] : fusion; }
};

inline constexpr int kNumColumns = kNumSensors + 1;
std::string column_name(int c);  // "com", ..., "fusion"

struct TrialResult {
    int index = 0;
    std::vector<std::string> test_subjects;
    std::size_t n_train = 0, n_val = 0, n_test = 0;
    ColumnMetrics metrics;
};

struct Summary {
    double mean = 0.0;
    double std = 0.0;  // population
};

struct ColumnSummary {
    Summary accuracy, f1;
};

/// Mean and population standard deviation per column over trials.
std::array<ColumnSummary, kNumColumns> summarize(std::span<const ColumnMetrics> trials);

struct FineTuneRow {
    double fraction = 0.0;
    std::vector<ColumnMetrics> trials;
    std::vector<std::string> warnings;
};

struct EvaluationReport {
    Scheme scheme = Scheme::random_segments;
    std::uint64_t seed = 0;
    std::string model;
    nlohmann::json config = nlohmann::json::object();
    std::vector<TrialResult> trials;
    std::vector<FineTuneRow> fine_tuning;

    std::array<ColumnSummary, kNumColumns> aggregate() const;
};

nlohmann::json to_json(const EvaluationReport& r);
EvaluationReport report_from_json(const nlohmann::json& j);

/// One row per report: accuracy and F1 (mean ± std) for each sensor and
/// for fusion.
std::string render_table(std::span<const EvaluationReport> reports);
/// Fine-tuning ladder: fused accuracy and F1 per fraction.
std::string render_fine_tune(const EvaluationReport& report);
void write_confusion_csv(const Metrics& m, const std::filesystem::path& path);

enum class ModelFamily { cnn_lstm, cnn, naive_bayes, decision_tree, svm, bagged_tree_ensemble };

std::string_view to_string(ModelFamily f);
std::optional<ModelFamily> parse_family(std::string_view s);
bool is_deep(ModelFamily f);
ClassicalKind classical_kind(ModelFamily f);

struct EvalConfig {
    ModelFamily family = ModelFamily::cnn_lstm;
    CnnLstmSpec cnn_lstm = CnnLstmSpec::desk();
    CnnSpec cnn = CnnSpec::desk();
    TrainConfig train = TrainConfig::desk();
};

nlohmann::json to_json(const EvalConfig& c);

/// Everything produced for one trial, handed to `RunOptions::on_trial`.
struct TrialOutput {
    int index = 0;
    const Trial* trial = nullptr;
    std::vector<int> truth;
    std::array<Eigen::MatrixXd, kNumSensors> probs;
    std::array<std::shared_ptr<const TrainedModel>, kNumSensors> deep;  // deep families only
    std::array<std::shared_ptr<const ClassicalModel>, kNumSensors> classical;
};

struct RunOptions {
    /// When set, models are saved under <dir>/trial_<k>/<sensor>/.
    std::optional<std::filesystem::path> model_dir;
    std::function<void(const TrialOutput&)> on_trial;
    std::ostream* log = nullptr;
};

/// Trains one model per sensor and trial, and scores each sensor and the
/// fused probabilities on the trial's test rows.
EvaluationReport run_scheme(const SegmentTable& table, const SplitPlan& plan, const EvalConfig& cfg,
                            const RunOptions& options = {});

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b);

struct TuneSplit {
    std::vector<std::size_t> tune, eval;
    std::vector<std::string> warnings;
};

/// For each subject in `rows`, floor(fraction * n_subject) rows are drawn for
/// tuning, spread over classes by largest remainder. Larger fractions extend
/// smaller ones for the same seed.
TuneSplit plan_fine_tune(const SegmentTable& table, std::span<const std::size_t> rows, double fraction,
                         std::uint64_t seed);

struct FineTuneConfig {
    std::vector<double> fractions{0.0, 0.02, 0.05, 0.10, 0.20};
    TrainConfig tune = tuning_default();
    std::uint64_t seed = 0;

    static TrainConfig tuning_default();
};

nlohmann::json to_json(const FineTuneConfig& c);

/// Tunes a copy of `model` on `tune_rows` of `sensor` with all parameters
/// trainable. An empty tuning set returns the model unchanged.
TrainedModel fine_tune(const TrainedModel& model, const SegmentTable& table, SensorLocation sensor,
                       std::span<const std::size_t> tune_rows, const TrainConfig& cfg);

/// Runs the ladder for one leave-subjects-out trial, returning one
/// ColumnMetrics per fraction.
std::vector<ColumnMetrics> fine_tune_trial(const std::array<std::shared_ptr<const TrainedModel>, kNumSensors>& models,
                                           const SegmentTable& table, const Trial& trial, int trial_index,
                                           const FineTuneConfig& cfg,
                                           std::vector<std::vector<std::string>>* warnings = nullptr);

}  // namespace runstyle
