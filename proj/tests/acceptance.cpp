// Acceptance run: one PASS/FAIL line per criterion.
//
// Exit status is 0 once every criterion has been evaluated, whatever the
// verdicts; --strict makes any FAIL exit with 1. A criterion that throws
// exits with 2.

#include <algorithm>
#include <chrono>
#include <fstream>
#include <cmath>
#include <iomanip>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "runstyle/evaluation.hpp"
#include "runstyle/features.hpp"
#include "runstyle/synthgait.hpp"
#include "support/feature_oracle.hpp"
#include "support/fixtures.hpp"

using namespace runstyle;
using Clock = std::chrono::steady_clock;

namespace {

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(double v, int digits = 3) {
    std::ostringstream s;
    s << std::fixed << std::setprecision(digits) << v;
    return s.str();
}

struct Verdict {
    bool pass = false;
    std::string detail;
};

/// Simplex check over every probability matrix handed out by a run.
struct SimplexAudit {
    long rows = 0;
    double worst_sum = 0.0;
    double min_entry = 1.0;
    bool wrong_width = false;

    void add(const Eigen::MatrixXd& p) {
        if (p.cols() != kNumStyles) wrong_width = true;
        for (Eigen::Index i = 0; i < p.rows(); ++i) {
            worst_sum = std::max(worst_sum, std::abs(p.row(i).sum() - 1.0));
            ++rows;
        }
        if (p.size() > 0) min_entry = std::min(min_entry, p.minCoeff());
    }
    bool ok() const { return !wrong_width && worst_sum <= 1e-5 && min_entry >= 0.0 && rows > 0; }
};

/// Structural checks over metrics and report JSON.
struct StructureAudit {
    long metrics = 0;
    long trace_mismatch = 0;
    long bad_reports = 0;

    void add(const Metrics& m) {
        ++metrics;
        if (static_cast<double>(m.trace()) / static_cast<double>(m.total()) != m.accuracy) ++trace_mismatch;
    }
    void add(const ColumnMetrics& c) {
        for (int k = 0; k < kNumColumns; ++k) add(c.column(k));
    }
    void add(const EvaluationReport& r) {
        for (const auto& t : r.trials) add(t.metrics);
        for (const auto& row : r.fine_tuning) {
            for (const auto& t : row.trials) add(t);
        }
        const auto j = to_json(r);
        bool ok = j.at("aggregate").size() == kNumColumns;
        for (int k = 0; k < kNumColumns; ++k) {
            const auto& col = j.at("aggregate").at(column_name(k));
            ok = ok && col.contains("acc") && col.contains("f1");
        }
        for (const auto& t : j.at("trials")) {
            for (int k = 0; k < kNumColumns; ++k) {
                const auto& col = t.at(column_name(k));
                ok = ok && col.contains("acc") && col.contains("f1");
            }
        }
        if (!ok) ++bad_reports;
    }
};

/// Largest absolute difference between numbers at matching positions; +inf
/// when the two documents differ in shape or in any non-numeric value.
double max_numeric_diff(const nlohmann::json& a, const nlohmann::json& b) {
    if (a.is_number() && b.is_number()) return std::abs(a.get<double>() - b.get<double>());
    if (a.type() != b.type() || a.size() != b.size()) return INFINITY;
    double worst = 0.0;
    if (a.is_object()) {
        for (auto it = a.begin(); it != a.end(); ++it) {
            if (!b.contains(it.key())) return INFINITY;
            worst = std::max(worst, max_numeric_diff(*it, b.at(it.key())));
        }
        return worst;
    }
    if (a.is_array()) {
        for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, max_numeric_diff(a[i], b[i]));
        return worst;
    }
    return a == b ? 0.0 : INFINITY;
}

double fusion_mean(const EvaluationReport& r) { return r.aggregate()[kNumSensors].accuracy.mean; }

class Acceptance {
public:
    Acceptance(std::uint64_t seed, bool verbose) : seed_(seed), verbose_(verbose) {}

    Verdict feature_oracle() {
        const auto t0 = Clock::now();
        double worst = 0.0;
        for (std::uint64_t s = 0; s < 1000; ++s) {
            const auto seg = fixtures::random_segment(s);
            const auto got = extract_features(seg);
            const auto want = oracle::features(seg.data(), seg.fs());
            for (int j = 0; j < kNumFeatures; ++j) worst = std::max(worst, oracle::relative_error(got[j], want[j]));
        }
        const double secs = seconds_since(t0);
        return {worst <= 1e-9 && secs < 60.0, "max relative error " + fmt_sci(worst) + ", " + fmt(secs, 1) + " s"};
    }

    Verdict segmentation() {
        auto rec = std::make_shared<ImuRecording>();
        rec->samples.assign(300 * 500, Sample{0.0, 0.0, 1.0});
        const auto segs = segment(rec);
        bool ok = segs.size() == 59;
        for (const auto& s : segs) {
            ok = ok && s.size() == 5000;
            const auto subs = subsegment(s);
            ok = ok && subs.size() == 8;
            for (const auto& sub : subs) ok = ok && sub.data.size() == 625;
        }
        return {ok, std::to_string(segs.size()) + " segments of " +
                        std::to_string(segs.empty() ? 0 : segs.front().size()) + " samples"};
    }

    Verdict gap() {
        ensure_cnn_lstm();
        const double r = fusion_mean(*lstm_random_), l = fusion_mean(*lstm_loso_);
        const double minutes = lstm_seconds_ / 60.0;
        return {r - l >= 0.10 && minutes <= 30.0, "random " + fmt(r) + ", leave-subjects-out " + fmt(l) + ", gap " +
                                                      fmt(r - l) + ", " + fmt(minutes, 1) + " min"};
    }

    Verdict ladder() {
        ensure_cnn_lstm();
        std::vector<double> means;
        for (const auto& row : lstm_loso_->fine_tuning) {
            double sum = 0.0;
            for (const auto& t : row.trials) sum += t.fusion.accuracy;
            means.push_back(sum / static_cast<double>(row.trials.size()));
        }
        bool ok = means.size() == 5;
        std::string detail;
        for (std::size_t i = 0; i < means.size(); ++i) {
            if (i > 0) {
                detail += " ";
                ok = ok && means[i] >= means[i - 1] - 0.02;
            }
            detail += fmt(means[i]);
        }
        if (means.size() == 5) ok = ok && means[4] - means[0] >= 0.10;
        return {ok, "fusion by fraction " + detail};
    }

    Verdict fusion_benefit() {
        ensure_cnn_lstm();
        bool every = true;
        double best_sum = 0.0, fused_sum = 0.0;
        for (const auto& t : lstm_random_->trials) {
            double mean = 0.0, best = 0.0;
            for (const auto& m : t.metrics.sensors) {
                mean += m.accuracy / kNumSensors;
                best = std::max(best, m.accuracy);
            }
            every = every && t.metrics.fusion.accuracy >= mean;
            best_sum += best;
            fused_sum += t.metrics.fusion.accuracy;
        }
        const double n = static_cast<double>(lstm_random_->trials.size());
        const bool near_best = fused_sum / n >= best_sum / n - 0.02;
        return {every && near_best, std::string(every ? "" : "not ") + "above the sensor mean in every trial; fused " +
                                        fmt(fused_sum / n) + " vs best sensor " + fmt(best_sum / n)};
    }

    Verdict ordering() {
        ensure_cnn_lstm();
        const double lstm = fusion_mean(*lstm_random_);
        const double cnn = fusion_mean(run(ModelFamily::cnn, random_plan()));
        double best_classical = 0.0;
        std::string best_name;
        for (auto f : {ModelFamily::naive_bayes, ModelFamily::decision_tree, ModelFamily::svm,
                       ModelFamily::bagged_tree_ensemble}) {
            const double v = fusion_mean(run(f, random_plan()));
            if (v > best_classical) {
                best_classical = v;
                best_name = std::string(to_string(f));
            }
        }
        const bool ok = lstm >= cnn - 0.02 && cnn >= best_classical - 0.02;
        return {ok, "cnn_lstm " + fmt(lstm) + ", cnn " + fmt(cnn) + ", best classical " + best_name + " " +
                        fmt(best_classical)};
    }

    Verdict invariants() {
        ensure_cnn_lstm();
        for (const auto& r : reports_) structure_.add(*r);
        const bool ok = simplex_.ok() && structure_.trace_mismatch == 0 && structure_.bad_reports == 0;
        return {ok, std::to_string(simplex_.rows) + " probability rows, worst |sum-1| " + fmt_sci(simplex_.worst_sum) +
                        ", " + std::to_string(reports_.size()) + " reports, " + std::to_string(structure_.metrics) +
                        " confusion matrices, " + std::to_string(structure_.trace_mismatch) + " trace mismatches"};
    }

    Verdict determinism() {
        ensure_cnn_lstm();
        log("repeating the cnn_lstm runs");
        const auto again_random = run_scheme(table(), random_plan(), config(ModelFamily::cnn_lstm), options(false));
        const auto again_loso = run_scheme(table(), loso_plan(), config(ModelFamily::cnn_lstm), options(false));
        auto strip = [](EvaluationReport r) {
            r.fine_tuning.clear();
            return to_json(r);
        };
        const double diff = std::max(max_numeric_diff(strip(*lstm_random_), to_json(again_random)),
                                     max_numeric_diff(strip(*lstm_loso_), to_json(again_loso)));
        return {diff <= 1e-6, "max metric difference " + fmt_sci(diff)};
    }

    Verdict split_hygiene() {
        long plans = 0, violations = 0;
        const auto& t = table();
        for (std::uint64_t s = 0; s < 200; ++s) {
            for (const auto& trial : plan_random_segment_split(t, 5, 0.2, 0.1, s).trials) {
                ++plans;
                std::set<std::size_t> seen;
                for (const auto* part : {&trial.train, &trial.val, &trial.test}) {
                    for (auto r : *part) violations += !seen.insert(r).second;
                }
            }
            std::multiset<std::string> tested;
            for (const auto& trial : plan_leave_subjects_out(t, 0.2, s).trials) {
                ++plans;
                const std::set<std::string> held(trial.test_subjects.begin(), trial.test_subjects.end());
                tested.insert(held.begin(), held.end());
                for (const auto* part : {&trial.train, &trial.val}) {
                    for (auto r : *part) violations += held.count(t.keys()[r].subject_id);
                }
                for (auto r : trial.test) violations += !held.count(t.keys()[r].subject_id);
            }
            const auto subjects = t.subjects();
            if (tested != std::multiset<std::string>(subjects.begin(), subjects.end())) ++violations;
        }
        return {violations == 0, std::to_string(plans) + " trials over 200 seeds, " + std::to_string(violations) +
                                     " violations"};
    }

private:
    static std::string fmt_sci(double v) {
        std::ostringstream s;
        s << std::scientific << std::setprecision(2) << v;
        return s.str();
    }

    void log(const std::string& msg) const {
        if (verbose_) std::cerr << msg << std::endl;
    }

    const SegmentTable& table() {
        if (!table_) {
            GeneratorConfig g;
            g.duration_s = 120.0;
            g.personalization = 0.15;
            g.seed = 42;
            log("generating the default dataset");
            table_ = std::make_unique<SegmentTable>(segment_dataset(std::make_shared<const Dataset>(generate_dataset(g))));
        }
        return *table_;
    }

    SplitPlan random_plan() { return plan_random_segment_split(table(), 5, 0.2, 0.1, seed_); }
    SplitPlan loso_plan() { return plan_leave_subjects_out(table(), 0.2, seed_); }

    EvalConfig config(ModelFamily f) const {
        EvalConfig c;
        c.family = f;
        c.train.seed = seed_;
        return c;
    }

    RunOptions options(bool audit) {
        RunOptions o;
        if (verbose_) o.log = &std::cerr;
        if (audit) {
            o.on_trial = [this](const TrialOutput& out) {
                for (const auto& p : out.probs) simplex_.add(p);
            };
        }
        return o;
    }

    const EvaluationReport& run(ModelFamily f, const SplitPlan& plan) {
        reports_.push_back(std::make_unique<EvaluationReport>(run_scheme(table(), plan, config(f), options(true))));
        return *reports_.back();
    }

    void ensure_cnn_lstm() {
        if (lstm_random_) return;
        const auto t0 = Clock::now();
        lstm_random_ = &run(ModelFamily::cnn_lstm, random_plan());
        const auto loso = loso_plan();

        FineTuneConfig ft;
        ft.seed = seed_;
        ft.tune.seed = seed_;
        ft.tune.learning_rate = config(ModelFamily::cnn_lstm).train.learning_rate;
        std::vector<std::vector<ColumnMetrics>> rungs;
        RunOptions o = options(true);
        auto audit = o.on_trial;
        double tuning_seconds = 0.0;
        o.on_trial = [&](const TrialOutput& out) {
            audit(out);
            const auto t1 = Clock::now();
            rungs.push_back(fine_tune_trial(out.deep, table(), *out.trial, out.index, ft));
            tuning_seconds += seconds_since(t1);
            log("fine-tuned trial " + std::to_string(out.index + 1));
        };
        reports_.push_back(std::make_unique<EvaluationReport>(run_scheme(table(), loso, config(ModelFamily::cnn_lstm), o)));
        lstm_loso_ = reports_.back().get();
        for (std::size_t f = 0; f < ft.fractions.size(); ++f) {
            FineTuneRow row{ft.fractions[f], {}, {}};
            for (const auto& r : rungs) row.trials.push_back(r[f]);
            lstm_loso_->fine_tuning.push_back(row);
        }
        lstm_seconds_ = seconds_since(t0) - tuning_seconds;
    }

    std::uint64_t seed_;
    bool verbose_;
    std::unique_ptr<SegmentTable> table_;
    std::vector<std::unique_ptr<EvaluationReport>> reports_;
    const EvaluationReport* lstm_random_ = nullptr;
    EvaluationReport* lstm_loso_ = nullptr;
    double lstm_seconds_ = 0.0;
    SimplexAudit simplex_;
    StructureAudit structure_;
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app("runstyle acceptance");
    bool strict = false, verbose = false;
    std::uint64_t seed = 0;
    std::vector<int> only;
    app.add_flag("--strict", strict, "Exit with 1 when any criterion fails");
    app.add_flag("-v,--verbose", verbose, "Log training progress to stderr");
    app.add_option("--seed", seed, "Split and training seed");
    std::string report;
    app.add_option("--only", only, "Run only these criteria")->check(CLI::Range(1, 9));
    app.add_option("--report", report, "Also write the result lines to this file");
    CLI11_PARSE(app, argc, argv);

    Acceptance a(seed, verbose);
    const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria = {
        {"feature oracle", [&] { return a.feature_oracle(); }},
        {"segmentation arithmetic", [&] { return a.segmentation(); }},
        {"random vs leave-subjects-out gap", [&] { return a.gap(); }},
        {"fine-tuning ladder", [&] { return a.ladder(); }},
        {"fusion benefit", [&] { return a.fusion_benefit(); }},
        {"model-family ordering", [&] { return a.ordering(); }},
        {"simplex and structure", [&] { return a.invariants(); }},
        {"determinism", [&] { return a.determinism(); }},
        {"split hygiene", [&] { return a.split_hygiene(); }},
    };
    // Criterion 7 audits the runs of the others, so it goes last.
    std::vector<int> order = {1, 2, 3, 4, 5, 6, 8, 9, 7};
    if (!only.empty()) {
        std::erase_if(order, [&](int c) { return std::find(only.begin(), only.end(), c) == only.end(); });
    }
    std::map<int, std::string> lines;
    int failed = 0;
    for (int c : order) {
        const auto& [name, fn] = criteria[static_cast<std::size_t>(c - 1)];
        Verdict v;
        try {
            v = fn();
        } catch (const std::exception& e) {
            std::cout << "criterion " << c << " ERROR " << name << ": " << e.what() << std::endl;
            return 2;
        }
        failed += !v.pass;
        lines[c] = "criterion " + std::to_string(c) + " " + (v.pass ? "PASS " : "FAIL ") + name + ": " + v.detail;
        if (verbose) std::cerr << lines[c] << std::endl;
    }
    std::ostringstream summary;
    for (const auto& [c, line] : lines) summary << line << "\n";
    summary << (failed == 0 ? "all criteria passed" : std::to_string(failed) + " criteria failed") << "\n";
    std::cout << summary.str() << std::flush;
    if (!report.empty()) {
        std::ofstream out(report);
        out << summary.str();
        if (!out) {
            std::cerr << "cannot write " << report << std::endl;
            return 2;
        }
    }
    return strict && failed > 0 ? 1 : 0;
}
