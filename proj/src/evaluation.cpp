#include "runstyle/evaluation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <numeric>
#include <ostream>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>

#include "runstyle/features.hpp"

namespace runstyle {

namespace fs = std::filesystem;
using nlohmann::json;

std::string_view to_string(Scheme s) {
    return s == Scheme::leave_subjects_out ? "leave_subjects_out" : "random_segments";
}

std::optional<Scheme> parse_scheme(std::string_view s) {
    if (s == "random_segments") return Scheme::random_segments;
    if (s == "leave_subjects_out") return Scheme::leave_subjects_out;
    return std::nullopt;
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(a >> 32),
                      static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(b >> 32)};
    std::array<std::uint32_t, 2> out{};
    seq.generate(out.begin(), out.end());
    return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

namespace {

// floor(frac * n), tolerant of products like 0.1 * 30 landing just below an integer.
std::size_t floor_count(double frac, std::size_t n) {
    return static_cast<std::size_t>(std::floor(frac * static_cast<double>(n) + 1e-9));
}

void check_fraction(double f, const char* name) {
    if (!(f > 0.0 && f < 1.0)) throw std::invalid_argument(std::string(name) + " must lie in (0, 1)");
}

// Splits `pool` into validation and training rows after a seeded shuffle.
void split_val(std::vector<std::size_t> pool, double val_frac, std::mt19937_64& rng, Trial& t) {
    std::shuffle(pool.begin(), pool.end(), rng);
    const std::size_t n_val = floor_count(val_frac, pool.size());
    t.val.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(n_val));
    t.train.assign(pool.begin() + static_cast<std::ptrdiff_t>(n_val), pool.end());
    std::sort(t.val.begin(), t.val.end());
    std::sort(t.train.begin(), t.train.end());
    if (t.train.empty()) throw std::invalid_argument("split leaves no training segments");
}

}  // namespace

SplitPlan plan_random_segment_split(const SegmentTable& table, int trials, double test_frac, double val_frac,
                                    std::uint64_t seed) {
    check_fraction(test_frac, "test_frac");
    check_fraction(val_frac, "val_frac");
    if (test_frac + val_frac >= 1.0) throw std::invalid_argument("test_frac and val_frac must sum to less than 1");
    if (trials < 1) throw std::invalid_argument("trials must be >= 1");
    const std::size_t n = table.size();
    if (n < 10) throw std::invalid_argument("random split needs at least 10 segments, got " + std::to_string(n));
    const std::size_t n_test = floor_count(test_frac, n);
    if (n_test == 0 || n_test >= n) throw std::invalid_argument("test_frac leaves an empty test or training set");

    SplitPlan plan;
    plan.scheme = Scheme::random_segments;
    plan.seed = seed;
    for (int k = 0; k < trials; ++k) {
        std::mt19937_64 rng(derive_seed(seed, 0x5E6, static_cast<std::uint64_t>(k)));
        std::vector<std::size_t> rows(n);
        std::iota(rows.begin(), rows.end(), std::size_t{0});
        std::shuffle(rows.begin(), rows.end(), rng);
        Trial t;
        t.test.assign(rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(n_test));
        std::sort(t.test.begin(), t.test.end());
        split_val(std::vector<std::size_t>(rows.begin() + static_cast<std::ptrdiff_t>(n_test), rows.end()),
                  val_frac, rng, t);
        plan.trials.push_back(std::move(t));
    }
    return plan;
}

SplitPlan plan_leave_subjects_out(const SegmentTable& table, double test_subject_frac, std::uint64_t seed,
                                  double val_frac) {
    check_fraction(test_subject_frac, "test_subject_frac");
    check_fraction(val_frac, "val_frac");
    std::vector<std::string> subjects = table.subjects();
    const auto groups = static_cast<std::size_t>(std::ceil(1.0 / test_subject_frac - 1e-9));
    if (subjects.size() < groups || subjects.size() < 2) {
        throw std::invalid_argument("leave_subjects_out needs at least " + std::to_string(std::max<std::size_t>(groups, 2)) +
                                    " subjects, got " + std::to_string(subjects.size()));
    }
    std::mt19937_64 rng(derive_seed(seed, 0x1050, 0));
    std::shuffle(subjects.begin(), subjects.end(), rng);

    SplitPlan plan;
    plan.scheme = Scheme::leave_subjects_out;
    plan.seed = seed;
    const std::size_t base = subjects.size() / groups, extra = subjects.size() % groups;
    std::size_t next = 0;
    for (std::size_t g = 0; g < groups; ++g) {
        const std::size_t size = base + (g < extra ? 1 : 0);
        Trial t;
        t.test_subjects.assign(subjects.begin() + static_cast<std::ptrdiff_t>(next),
                               subjects.begin() + static_cast<std::ptrdiff_t>(next + size));
        next += size;
        std::sort(t.test_subjects.begin(), t.test_subjects.end());
        const std::set<std::string> held(t.test_subjects.begin(), t.test_subjects.end());
        std::vector<std::size_t> pool;
        for (std::size_t r = 0; r < table.size(); ++r) {
            (held.count(table.keys()[r].subject_id) ? t.test : pool).push_back(r);
        }
        std::mt19937_64 trial_rng(derive_seed(seed, 0x1051, g));
        split_val(std::move(pool), val_frac, trial_rng, t);
        plan.trials.push_back(std::move(t));
    }
    return plan;
}

json plan_to_json(const SplitPlan& plan, const SegmentTable& table) {
    auto keys = [&](const std::vector<std::size_t>& rows) {
        json out = json::array();
        for (std::size_t r : rows) {
            const auto& k = table.keys()[r];
            out.push_back(k.subject_id + "/" + std::string(to_string(k.style)) + "/" + std::to_string(k.index));
        }
        return out;
    };
    json trials = json::array();
    for (const auto& t : plan.trials) {
        trials.push_back({{"test_subjects", t.test_subjects},
                          {"train", keys(t.train)},
                          {"val", keys(t.val)},
                          {"test", keys(t.test)}});
    }
    return {{"scheme", to_string(plan.scheme)}, {"seed", plan.seed}, {"trials", trials}};
}

// ------------------------------------------------------------- metrics

long Metrics::total() const {
    long s = 0;
    for (const auto& row : confusion) s += std::accumulate(row.begin(), row.end(), 0L);
    return s;
}

long Metrics::trace() const {
    long s = 0;
    for (std::size_t i = 0; i < confusion.size(); ++i) s += confusion[i][i];
    return s;
}

Metrics compute_metrics(std::span<const int> truth, std::span<const int> predicted) {
    if (truth.size() != predicted.size() || truth.empty()) {
        throw ContractError("compute_metrics: need equal, non-zero label counts");
    }
    Metrics m;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        const int t = truth[i], p = predicted[i];
        if (t < 0 || t >= kNumStyles || p < 0 || p >= kNumStyles) {
            throw ContractError("compute_metrics: label outside 0-7");
        }
        ++m.confusion[static_cast<std::size_t>(t)][static_cast<std::size_t>(p)];
    }
    m.accuracy = static_cast<double>(m.trace()) / static_cast<double>(m.total());
    double f1_sum = 0.0;
    int present = 0;
    for (std::size_t c = 0; c < kNumStyles; ++c) {
        long tp = m.confusion[c][c], fn = 0, fp = 0;
        for (std::size_t k = 0; k < kNumStyles; ++k) {
            if (k == c) continue;
            fn += m.confusion[c][k];
            fp += m.confusion[k][c];
        }
        if (tp + fn == 0) continue;
        ++present;
        f1_sum += 2.0 * static_cast<double>(tp) / static_cast<double>(2 * tp + fp + fn);
    }
    m.macro_f1 = f1_sum / present;
    return m;
}

std::string column_name(int c) {
    return c < kNumSensors ? std::string(to_string(index_sensor(c))) : "fusion";
}

std::array<ColumnSummary, kNumColumns> summarize(std::span<const ColumnMetrics> trials) {
    std::array<ColumnSummary, kNumColumns> out{};
    if (trials.empty()) return out;
    const auto n = static_cast<double>(trials.size());
    for (int c = 0; c < kNumColumns; ++c) {
        auto stat = [&](auto get) {
            double mean = 0.0;
            for (const auto& t : trials) mean += get(t.column(c));
            mean /= n;
            double var = 0.0;
            for (const auto& t : trials) var += (get(t.column(c)) - mean) * (get(t.column(c)) - mean);
            return Summary{mean, std::sqrt(var / n)};
        };
        out[static_cast<std::size_t>(c)].accuracy = stat([](const Metrics& m) { return m.accuracy; });
        out[static_cast<std::size_t>(c)].f1 = stat([](const Metrics& m) { return m.macro_f1; });
    }
    return out;
}

std::array<ColumnSummary, kNumColumns> EvaluationReport::aggregate() const {
    std::vector<ColumnMetrics> cols;
    for (const auto& t : trials) cols.push_back(t.metrics);
    return summarize(cols);
}

// -------------------------------------------------------------- report json

namespace {

json metrics_json(const Metrics& m) {
    return {{"acc", m.accuracy}, {"f1", m.macro_f1}, {"confusion", m.confusion}};
}

Metrics metrics_from(const json& j) {
    Metrics m;
    m.accuracy = j.at("acc").get<double>();
    m.macro_f1 = j.at("f1").get<double>();
    m.confusion = j.at("confusion").get<std::array<std::array<long, kNumStyles>, kNumStyles>>();
    return m;
}

json columns_json(const ColumnMetrics& c) {
    json j = json::object();
    for (int k = 0; k < kNumColumns; ++k) j[column_name(k)] = metrics_json(c.column(k));
    return j;
}

ColumnMetrics columns_from(const json& j) {
    ColumnMetrics c;
    for (int k = 0; k < kNumSensors; ++k) c.sensors[static_cast<std::size_t>(k)] = metrics_from(j.at(column_name(k)));
    c.fusion = metrics_from(j.at("fusion"));
    return c;
}

json summary_json(const std::array<ColumnSummary, kNumColumns>& s) {
    json j = json::object();
    for (int k = 0; k < kNumColumns; ++k) {
        const auto& c = s[static_cast<std::size_t>(k)];
        j[column_name(k)] = {{"acc", {{"mean", c.accuracy.mean}, {"std", c.accuracy.std}}},
                             {"f1", {{"mean", c.f1.mean}, {"std", c.f1.std}}}};
    }
    return j;
}

}  // namespace

json to_json(const EvaluationReport& r) {
    json trials = json::array();
    for (const auto& t : r.trials) {
        json j = {{"index", t.index},
                  {"test_subjects", t.test_subjects},
                  {"n_train", t.n_train},
                  {"n_val", t.n_val},
                  {"n_test", t.n_test}};
        j.update(columns_json(t.metrics));
        trials.push_back(j);
    }
    json out = {{"scheme", to_string(r.scheme)},
                {"seed", r.seed},
                {"model", r.model},
                {"config", r.config},
                {"trials", trials},
                {"aggregate", summary_json(r.aggregate())}};
    if (!r.fine_tuning.empty()) {
        json rows = json::array();
        for (const auto& row : r.fine_tuning) {
            json ts = json::array();
            for (const auto& t : row.trials) ts.push_back(columns_json(t));
            rows.push_back({{"fraction", row.fraction},
                            {"trials", ts},
                            {"aggregate", summary_json(summarize(row.trials))},
                            {"warnings", row.warnings}});
        }
        out["fine_tuning"] = rows;
    }
    return out;
}

EvaluationReport report_from_json(const json& j) {
    EvaluationReport r;
    const auto scheme = parse_scheme(j.at("scheme").get<std::string>());
    if (!scheme) throw std::invalid_argument("report: unknown scheme");
    r.scheme = *scheme;
    r.seed = j.at("seed").get<std::uint64_t>();
    r.model = j.at("model").get<std::string>();
    r.config = j.value("config", json::object());
    for (const auto& t : j.at("trials")) {
        TrialResult tr;
        tr.index = t.at("index").get<int>();
        tr.test_subjects = t.value("test_subjects", std::vector<std::string>{});
        tr.n_train = t.value("n_train", std::size_t{0});
        tr.n_val = t.value("n_val", std::size_t{0});
        tr.n_test = t.value("n_test", std::size_t{0});
        tr.metrics = columns_from(t);
        r.trials.push_back(std::move(tr));
    }
    if (j.contains("fine_tuning")) {
        for (const auto& row : j["fine_tuning"]) {
            FineTuneRow fr;
            fr.fraction = row.at("fraction").get<double>();
            for (const auto& t : row.at("trials")) fr.trials.push_back(columns_from(t));
            fr.warnings = row.value("warnings", std::vector<std::string>{});
            r.fine_tuning.push_back(std::move(fr));
        }
    }
    return r;
}

// ------------------------------------------------------------- rendering

namespace {

std::string display_model(const std::string& model) {
    static const std::map<std::string, std::string> names = {
        {"naive_bayes", "Naive Bayes"}, {"decision_tree", "Decision Tree"}, {"svm", "SVM"},
        {"bagged_tree_ensemble", "BTE"}, {"cnn", "CNN"},                    {"cnn_lstm", "CNN-LSTM"}};
    const auto it = names.find(model);
    return it == names.end() ? model : it->second;
}

std::string pm(const Summary& s) {
    std::ostringstream o;
    o << std::fixed << std::setprecision(3) << s.mean << "±" << s.std;
    return o.str();
}

// Pads by code points so the ± sign counts as one column.
std::string pad(const std::string& s, std::size_t width) {
    std::size_t len = 0;
    for (unsigned char ch : s) len += (ch & 0xC0) != 0x80 ? 1 : 0;
    return s + std::string(width > len ? width - len : 1, ' ');
}

std::string rtrim_lines(const std::string& text) {
    std::istringstream in(text);
    std::string line, out;
    while (std::getline(in, line)) {
        line.erase(line.find_last_not_of(' ') + 1);
        out += line + "\n";
    }
    return out;
}

}  // namespace

std::string render_table(std::span<const EvaluationReport> reports) {
    std::ostringstream o;
    const std::size_t w0 = 15, w = 13;
    std::string scheme = reports.empty() ? "" : std::string(to_string(reports.front().scheme));
    o << "Scheme: " << scheme << "\n";
    o << pad("Method", w0);
    for (int c = 0; c < kNumColumns; ++c) {
        const std::string name = c < kNumSensors ? std::string(display_name(index_sensor(c))) : "Fusion";
        o << pad(name + " Acc", w) << pad(name + " F1", w);
    }
    o << "\n";
    for (const auto& r : reports) {
        const auto agg = r.aggregate();
        o << pad(display_model(r.model), w0);
        for (const auto& c : agg) o << pad(pm(c.accuracy), w) << pad(pm(c.f1), w);
        o << "\n";
    }
    return rtrim_lines(o.str());
}

std::string render_fine_tune(const EvaluationReport& report) {
    std::ostringstream o;
    o << pad("Fraction", 15) << pad("Accuracy", 14) << "F1 Score\n";
    for (const auto& row : report.fine_tuning) {
        std::ostringstream label;
        if (row.fraction == 0.0) {
            label << "No Tuning";
        } else {
            label << "Tuning " << row.fraction * 100.0 << "%";
        }
        const auto fused = summarize(row.trials)[kNumSensors];
        o << pad(label.str(), 15) << pad(pm(fused.accuracy), 14) << pm(fused.f1) << "\n";
    }
    return o.str();
}

void write_confusion_csv(const Metrics& m, const fs::path& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << "truth";
    for (StyleLabel s : kAllStyles) out << ',' << to_string(s);
    out << '\n';
    for (std::size_t t = 0; t < kNumStyles; ++t) {
        out << to_string(kAllStyles[t]);
        for (long v : m.confusion[t]) out << ',' << v;
        out << '\n';
    }
    if (!out) throw std::runtime_error("cannot write " + path.string());
}

// ------------------------------------------------------------- families

namespace {

constexpr std::array<std::pair<ModelFamily, std::string_view>, 6> kFamilies = {{
    {ModelFamily::cnn_lstm, "cnn_lstm"},
    {ModelFamily::cnn, "cnn"},
    {ModelFamily::naive_bayes, "naive_bayes"},
    {ModelFamily::decision_tree, "decision_tree"},
    {ModelFamily::svm, "svm"},
    {ModelFamily::bagged_tree_ensemble, "bagged_tree_ensemble"},
}};

}  // namespace

std::string_view to_string(ModelFamily f) {
    for (const auto& [fam, name] : kFamilies) {
        if (fam == f) return name;
    }
    throw ContractError("invalid ModelFamily");
}

std::optional<ModelFamily> parse_family(std::string_view s) {
    for (const auto& [fam, name] : kFamilies) {
        if (name == s) return fam;
    }
    return std::nullopt;
}

bool is_deep(ModelFamily f) { return f == ModelFamily::cnn_lstm || f == ModelFamily::cnn; }

ClassicalKind classical_kind(ModelFamily f) {
    switch (f) {
        case ModelFamily::naive_bayes: return ClassicalKind::naive_bayes;
        case ModelFamily::decision_tree: return ClassicalKind::decision_tree;
        case ModelFamily::svm: return ClassicalKind::svm;
        case ModelFamily::bagged_tree_ensemble: return ClassicalKind::bagged_tree_ensemble;
        default: throw ContractError(std::string(to_string(f)) + " is not a classical family");
    }
}

json to_json(const EvalConfig& c) {
    json j = {{"family", to_string(c.family)}};
    if (c.family == ModelFamily::cnn_lstm) j["spec"] = c.cnn_lstm;
    if (c.family == ModelFamily::cnn) j["spec"] = c.cnn;
    if (is_deep(c.family)) {
        j["train"] = c.train;
    } else {
        json per_sensor = json::object();
        for (SensorLocation s : kAllSensors) {
            per_sensor[std::string(to_string(s))] = default_config(classical_kind(c.family), s);
        }
        j["classical"] = per_sensor;
        j["seed"] = c.train.seed;
    }
    return j;
}

// ------------------------------------------------------------ run_scheme

namespace {

std::vector<Segment> pick(const std::vector<Segment>& segs, std::span<const std::size_t> rows) {
    std::vector<Segment> out;
    out.reserve(rows.size());
    for (std::size_t r : rows) out.push_back(segs[r]);
    return out;
}

std::vector<int> pick_labels(const SegmentTable& table, std::span<const std::size_t> rows) {
    std::vector<int> out;
    out.reserve(rows.size());
    for (std::size_t r : rows) out.push_back(table.label(r));
    return out;
}

Eigen::MatrixXd pick_rows(const Eigen::MatrixXd& m, std::span<const std::size_t> rows) {
    Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), m.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = m.row(static_cast<Eigen::Index>(rows[i]));
    return out;
}

std::vector<int> row_argmax(const Eigen::MatrixXd& p) {
    std::vector<int> out(static_cast<std::size_t>(p.rows()));
    for (Eigen::Index i = 0; i < p.rows(); ++i) out[static_cast<std::size_t>(i)] = argmax(p.row(i).transpose());
    return out;
}

ColumnMetrics score(const std::array<Eigen::MatrixXd, kNumSensors>& probs, std::span<const int> truth) {
    ColumnMetrics cm;
    for (std::size_t s = 0; s < kNumSensors; ++s) cm.sensors[s] = compute_metrics(truth, row_argmax(probs[s]));
    std::vector<int> fused(truth.size());
    std::array<Eigen::VectorXd, kNumSensors> v;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        for (std::size_t s = 0; s < kNumSensors; ++s) v[s] = probs[s].row(static_cast<Eigen::Index>(i)).transpose();
        fused[i] = argmax(fuse_scores(v));
    }
    cm.fusion = compute_metrics(truth, fused);
    return cm;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

EvaluationReport run_scheme(const SegmentTable& table, const SplitPlan& plan, const EvalConfig& cfg,
                            const RunOptions& options) {
    if (plan.trials.empty()) throw std::invalid_argument("run_scheme: plan has no trials");
    EvaluationReport report;
    report.scheme = plan.scheme;
    report.seed = plan.seed;
    report.model = std::string(to_string(cfg.family));
    report.config = to_json(cfg);

    std::array<Eigen::MatrixXd, kNumSensors> features;
    if (!is_deep(cfg.family)) {
        for (std::size_t s = 0; s < kNumSensors; ++s) {
            features[s] = feature_matrix(table, index_sensor(static_cast<int>(s))).features;
        }
    }

    for (std::size_t k = 0; k < plan.trials.size(); ++k) {
        const Trial& trial = plan.trials[k];
        TrialOutput out;
        out.index = static_cast<int>(k);
        out.trial = &trial;
        out.truth = pick_labels(table, trial.test);
        try {
            const auto train_y = pick_labels(table, trial.train);
            const auto val_y = pick_labels(table, trial.val);
            for (std::size_t s = 0; s < kNumSensors; ++s) {
                const SensorLocation sensor = index_sensor(static_cast<int>(s));
                const auto t0 = std::chrono::steady_clock::now();
                const std::uint64_t seed = derive_seed(cfg.train.seed, k, s);
                const fs::path dir = options.model_dir ? *options.model_dir / ("trial_" + std::to_string(k)) /
                                                             std::string(to_string(sensor))
                                                       : fs::path();
                if (is_deep(cfg.family)) {
                    const auto& segs = table.segments(sensor);
                    TrainConfig tc = cfg.train;
                    tc.seed = seed;
                    const DeepSpec spec = cfg.family == ModelFamily::cnn_lstm ? DeepSpec(cfg.cnn_lstm) : DeepSpec(cfg.cnn);
                    auto model = std::make_shared<TrainedModel>(
                        train(spec, pick(segs, trial.train), train_y, pick(segs, trial.val), val_y, tc));
                    out.probs[s] = model->predict_proba(pick(segs, trial.test));
                    if (options.model_dir) model->save(dir);
                    out.deep[s] = std::move(model);
                } else {
                    ClassicalConfig cc = default_config(classical_kind(cfg.family), sensor);
                    cc.seed = seed;
                    auto model = std::make_shared<ClassicalModel>(
                        train_classical(cc, pick_rows(features[s], trial.train), train_y));
                    out.probs[s] = model->predict_proba(pick_rows(features[s], trial.test));
                    if (options.model_dir) model->save(dir);
                    out.classical[s] = std::move(model);
                }
                if (options.log) {
                    const auto acc = compute_metrics(out.truth, row_argmax(out.probs[s])).accuracy;
                    *options.log << report.model << " trial " << k + 1 << "/" << plan.trials.size() << " "
                                 << to_string(sensor) << ": acc " << std::fixed << std::setprecision(3) << acc
                                 << " (" << std::setprecision(1) << seconds_since(t0) << " s)" << std::endl;
                }
            }
        } catch (const std::exception& e) {
            throw std::runtime_error("trial " + std::to_string(k) + ": " + e.what());
        }

        TrialResult tr;
        tr.index = static_cast<int>(k);
        tr.test_subjects = trial.test_subjects;
        tr.n_train = trial.train.size();
        tr.n_val = trial.val.size();
        tr.n_test = trial.test.size();
        tr.metrics = score(out.probs, out.truth);
        if (options.log) {
            *options.log << report.model << " trial " << k + 1 << " fusion: acc " << std::fixed
                         << std::setprecision(3) << tr.metrics.fusion.accuracy << std::endl;
        }
        report.trials.push_back(std::move(tr));
        if (options.on_trial) options.on_trial(out);
    }
    return report;
}

// ------------------------------------------------------------- fine-tune

TrainConfig FineTuneConfig::tuning_default() {
    TrainConfig c = TrainConfig::desk();
    c.epochs = 50;
    c.patience.reset();
    return c;
}

json to_json(const FineTuneConfig& c) {
    return {{"fractions", c.fractions}, {"tune", c.tune}, {"seed", c.seed}};
}

TuneSplit plan_fine_tune(const SegmentTable& table, std::span<const std::size_t> rows, double fraction,
                         std::uint64_t seed) {
    if (!(fraction >= 0.0 && fraction < 1.0)) throw std::invalid_argument("fine-tune fraction must lie in [0, 1)");
    // subject -> class -> rows
    std::map<std::string, std::array<std::vector<std::size_t>, kNumStyles>> groups;
    for (std::size_t r : rows) {
        groups[table.keys()[r].subject_id][static_cast<std::size_t>(table.label(r))].push_back(r);
    }
    TuneSplit out;
    std::uint64_t subject_index = 0;
    for (auto& [subject, by_class] : groups) {
        std::size_t n_subject = 0;
        for (const auto& v : by_class) n_subject += v.size();
        const std::size_t n_tune = floor_count(fraction, n_subject);
        // Largest-remainder apportionment of n_tune over classes.
        std::array<std::size_t, kNumStyles> quota{};
        std::array<double, kNumStyles> rem{};
        std::size_t given = 0;
        for (std::size_t c = 0; c < kNumStyles; ++c) {
            const double exact = static_cast<double>(n_tune) * static_cast<double>(by_class[c].size()) /
                                 static_cast<double>(n_subject);
            quota[c] = static_cast<std::size_t>(std::floor(exact + 1e-9));
            rem[c] = exact - static_cast<double>(quota[c]);
            given += quota[c];
        }
        std::array<std::size_t, kNumStyles> order{};
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return rem[a] > rem[b]; });
        for (std::size_t i = 0; given < n_tune && i < kNumStyles; ++i) {
            if (quota[order[i]] < by_class[order[i]].size()) {
                ++quota[order[i]];
                ++given;
            }
        }
        for (std::size_t c = 0; c < kNumStyles; ++c) {
            auto& v = by_class[c];
            if (v.empty()) continue;
            std::mt19937_64 rng(derive_seed(seed, subject_index, c));
            std::shuffle(v.begin(), v.end(), rng);
            out.tune.insert(out.tune.end(), v.begin(), v.begin() + static_cast<std::ptrdiff_t>(quota[c]));
            out.eval.insert(out.eval.end(), v.begin() + static_cast<std::ptrdiff_t>(quota[c]), v.end());
            if (fraction > 0.0 && quota[c] == 0) {
                std::ostringstream w;
                w << "subject " << subject << ": no " << to_string(kAllStyles[c])
                  << " tuning segments at fraction " << fraction;
                out.warnings.push_back(w.str());
            }
        }
        ++subject_index;
    }
    std::sort(out.tune.begin(), out.tune.end());
    std::sort(out.eval.begin(), out.eval.end());
    return out;
}

TrainedModel fine_tune(const TrainedModel& model, const SegmentTable& table, SensorLocation sensor,
                       std::span<const std::size_t> tune_rows, const TrainConfig& cfg) {
    if (tune_rows.empty()) return model;
    const auto segs = pick(table.segments(sensor), tune_rows);
    const auto labels = pick_labels(table, tune_rows);
    return continue_training(model, segs, labels, {}, {}, cfg);
}

std::vector<ColumnMetrics> fine_tune_trial(const std::array<std::shared_ptr<const TrainedModel>, kNumSensors>& models,
                                           const SegmentTable& table, const Trial& trial, int trial_index,
                                           const FineTuneConfig& cfg,
                                           std::vector<std::vector<std::string>>* warnings) {
    for (const auto& m : models) {
        if (!m) throw std::invalid_argument("fine_tune_trial: missing sensor model");
    }
    std::vector<ColumnMetrics> out;
    if (warnings) warnings->clear();
    for (double fraction : cfg.fractions) {
        const TuneSplit split =
            plan_fine_tune(table, trial.test, fraction, derive_seed(cfg.seed, static_cast<std::uint64_t>(trial_index), 0x7E));
        if (split.eval.empty()) throw std::invalid_argument("fine-tune fraction leaves no evaluation segments");
        if (warnings) warnings->push_back(split.warnings);
        std::array<Eigen::MatrixXd, kNumSensors> probs;
        for (std::size_t s = 0; s < kNumSensors; ++s) {
            const SensorLocation sensor = index_sensor(static_cast<int>(s));
            TrainConfig tc = cfg.tune;
            tc.seed = derive_seed(cfg.tune.seed, static_cast<std::uint64_t>(trial_index), s);
            const auto eval_segs = pick(table.segments(sensor), split.eval);
            if (split.tune.empty()) {
                probs[s] = models[s]->predict_proba(eval_segs);
            } else {
                probs[s] = fine_tune(*models[s], table, sensor, split.tune, tc).predict_proba(eval_segs);
            }
        }
        out.push_back(score(probs, pick_labels(table, split.eval)));
    }
    return out;
}

}  // namespace runstyle
