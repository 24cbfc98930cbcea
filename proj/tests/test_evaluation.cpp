#include "doctest.h"

#include <algorithm>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "runstyle/evaluation.hpp"
#include "support/fixtures.hpp"

using namespace runstyle;

namespace {

/// `subjects` subjects with `per_recording` segments per recording; the
/// constant per-style signal carries a little noise.
SegmentTable noisy_table(int subjects, int per_recording, std::uint64_t seed = 1) {
    auto d = fixtures::constant_dataset(subjects, static_cast<std::size_t>(2500 * (per_recording + 1)));
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, 0.05);
    for (auto& r : d.recordings) {
        for (auto& s : r.samples) {
            s.ax += noise(rng);
            s.ay += noise(rng);
            s.az += noise(rng);
        }
    }
    return segment_dataset(std::make_shared<Dataset>(std::move(d)));
}

std::set<std::size_t> as_set(const std::vector<std::size_t>& v) { return {v.begin(), v.end()}; }

bool disjoint(const std::vector<std::size_t>& a, const std::vector<std::size_t>& b) {
    const auto sb = as_set(b);
    return std::none_of(a.begin(), a.end(), [&](std::size_t r) { return sb.count(r) > 0; });
}

Metrics make_metrics(std::vector<int> truth, std::vector<int> pred) { return compute_metrics(truth, pred); }

}  // namespace

TEST_CASE("scheme and family names") {
    CHECK(parse_scheme("leave_subjects_out") == Scheme::leave_subjects_out);
    CHECK(to_string(Scheme::random_segments) == "random_segments");
    CHECK_FALSE(parse_scheme("kfold"));
    CHECK(parse_family("bagged_tree_ensemble") == ModelFamily::bagged_tree_ensemble);
    CHECK(is_deep(ModelFamily::cnn));
    CHECK_FALSE(is_deep(ModelFamily::svm));
    CHECK(classical_kind(ModelFamily::decision_tree) == ClassicalKind::decision_tree);
    CHECK_FALSE(parse_family("rnn"));
    CHECK(column_name(0) == "com");
    CHECK(column_name(5) == "fusion");
}

TEST_CASE("random split sizes and disjointness") {
    const auto table = noisy_table(2, 5);
    REQUIRE(table.size() == 80);
    const auto plan = plan_random_segment_split(table, 5, 0.2, 0.1, 7);
    REQUIRE(plan.trials.size() == 5);
    for (const auto& t : plan.trials) {
        CHECK(t.test.size() == 16);
        CHECK(t.val.size() == 6);
        CHECK(t.train.size() == 58);
        CHECK(disjoint(t.train, t.test));
        CHECK(disjoint(t.val, t.test));
        CHECK(disjoint(t.train, t.val));
        CHECK(t.test_subjects.empty());
    }
    CHECK(plan.trials[0].test != plan.trials[1].test);
}

TEST_CASE("split counts round down") {
    // 4720 segments: 944 test, 377 validation, 3399 train.
    const std::size_t n = 4720;
    const auto test = static_cast<std::size_t>(std::floor(0.2 * n + 1e-9));
    const auto val = static_cast<std::size_t>(std::floor(0.1 * static_cast<double>(n - test) + 1e-9));
    CHECK(test == 944);
    CHECK(val == 377);
    CHECK(n - test - val == 3399);
}

TEST_CASE("split property over seeds") {
    const auto table = noisy_table(5, 2);
    for (std::uint64_t seed = 0; seed < 40; ++seed) {
        for (const auto& t : plan_random_segment_split(table, 2, 0.2, 0.1, seed).trials) {
            CHECK(t.train.size() + t.val.size() + t.test.size() == table.size());
            CHECK(disjoint(t.train, t.test));
            CHECK(disjoint(t.train, t.val));
            CHECK(disjoint(t.val, t.test));
        }
        const auto loso = plan_leave_subjects_out(table, 0.2, seed);
        std::multiset<std::string> tested;
        for (const auto& t : loso.trials) {
            tested.insert(t.test_subjects.begin(), t.test_subjects.end());
            const std::set<std::string> held(t.test_subjects.begin(), t.test_subjects.end());
            for (auto r : t.train) CHECK(held.count(table.keys()[r].subject_id) == 0);
            for (auto r : t.val) CHECK(held.count(table.keys()[r].subject_id) == 0);
            for (auto r : t.test) CHECK(held.count(table.keys()[r].subject_id) == 1);
        }
        CHECK(tested == std::multiset<std::string>{"S01", "S02", "S03", "S04", "S05"});
    }
}

TEST_CASE("leave-subjects-out groups") {
    const auto table = noisy_table(7, 1);
    const auto plan = plan_leave_subjects_out(table, 0.2, 3);
    REQUIRE(plan.trials.size() == 5);
    std::vector<std::size_t> sizes;
    for (const auto& t : plan.trials) sizes.push_back(t.test_subjects.size());
    std::sort(sizes.begin(), sizes.end());
    CHECK(sizes == std::vector<std::size_t>{1, 1, 1, 2, 2});
    CHECK(plan_leave_subjects_out(table, 0.5, 3).trials.size() == 2);
    CHECK(plan_leave_subjects_out(table, 1.0 / 7.0, 3).trials.size() == 7);
}

TEST_CASE("split parameter errors") {
    const auto table = noisy_table(2, 5);
    CHECK_THROWS_AS(plan_random_segment_split(table, 5, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(plan_random_segment_split(table, 5, 0.6, 0.9), std::invalid_argument);
    CHECK_THROWS_AS(plan_random_segment_split(table, 0), std::invalid_argument);
    CHECK_THROWS_AS(plan_leave_subjects_out(table, 1.0), std::invalid_argument);
}

TEST_CASE("split plan JSON names rows") {
    const auto table = noisy_table(2, 5);
    const auto j = plan_to_json(plan_leave_subjects_out(table, 0.5, 1), table);
    const std::string text = j.dump();
    CHECK(text.find("S01/") != std::string::npos);
    CHECK(text.find("leave_subjects_out") != std::string::npos);
}

TEST_CASE("metrics worked example") {
    const auto m = make_metrics({0, 1, 1, 1}, {0, 0, 1, 1});
    CHECK(m.accuracy == 0.75);
    CHECK(m.macro_f1 == doctest::Approx((2.0 / 3.0 + 0.8) / 2.0).epsilon(1e-15));
    CHECK(m.confusion[1][0] == 1);
    CHECK(m.confusion[1][1] == 2);
    CHECK(m.total() == 4);
    CHECK(static_cast<double>(m.trace()) / static_cast<double>(m.total()) == m.accuracy);

    const auto perfect = make_metrics({0, 3, 7, 7}, {0, 3, 7, 7});
    CHECK(perfect.accuracy == 1.0);
    CHECK(perfect.macro_f1 == 1.0);

    CHECK_THROWS_AS(make_metrics({}, {}), ContractError);
    CHECK_THROWS_AS(make_metrics({0, 1}, {0}), ContractError);
    CHECK_THROWS_AS(make_metrics({0, 9}, {0, 1}), ContractError);
}

TEST_CASE("confusion trace matches accuracy for random labels") {
    std::mt19937_64 rng(5);
    std::uniform_int_distribution<int> lab(0, 7);
    for (int k = 0; k < 50; ++k) {
        std::vector<int> t(37), p(37);
        for (auto& v : t) v = lab(rng);
        for (auto& v : p) v = lab(rng);
        const auto m = compute_metrics(t, p);
        CHECK(static_cast<double>(m.trace()) / static_cast<double>(m.total()) == m.accuracy);
        CHECK(m.macro_f1 >= 0.0);
        CHECK(m.macro_f1 <= 1.0);
    }
}

TEST_CASE("aggregate uses population statistics") {
    EvaluationReport r;
    for (double acc : {0.5, 1.0}) {
        TrialResult t;
        t.metrics.fusion.accuracy = acc;
        t.metrics.fusion.macro_f1 = acc / 2;
        r.trials.push_back(t);
    }
    const auto agg = r.aggregate();
    CHECK(agg[5].accuracy.mean == 0.75);
    CHECK(agg[5].accuracy.std == doctest::Approx(0.25));
    CHECK(agg[5].f1.mean == 0.375);
    CHECK(agg[0].accuracy.std == 0.0);
}

TEST_CASE("report JSON round-trip and rendering") {
    fixtures::TempDir dir("eval");
    EvaluationReport r;
    r.scheme = Scheme::leave_subjects_out;
    r.seed = 9;
    r.model = "svm";
    r.config = {{"note", "x"}};
    for (int k = 0; k < 2; ++k) {
        TrialResult t;
        t.index = k;
        t.test_subjects = {"S0" + std::to_string(k + 1)};
        t.n_train = 10;
        t.n_val = 1;
        t.n_test = 4;
        for (int c = 0; c < kNumSensors; ++c) t.metrics.sensors[static_cast<std::size_t>(c)] = make_metrics({0, 1, 1, 1}, {0, 0, 1, 1});
        t.metrics.fusion = make_metrics({0, 1, 1, 1}, {0, 1, 1, k});
        r.trials.push_back(t);
    }
    FineTuneRow row;
    row.fraction = 0.05;
    row.trials = {r.trials[0].metrics, r.trials[1].metrics};
    row.warnings = {"w"};
    r.fine_tuning.push_back(row);

    const auto j = to_json(r);
    CHECK(j.at("aggregate").at("fusion").at("acc").at("mean") == 0.875);
    const auto back = report_from_json(j);
    CHECK(to_json(back) == j);

    const std::vector<EvaluationReport> reports{r};
    const auto table = render_table(reports);
    CHECK(table.find("Scheme: leave_subjects_out") != std::string::npos);
    CHECK(table.find("Fusion") != std::string::npos);
    CHECK(table.find("0.875±0.125") != std::string::npos);
    const auto ladder = render_fine_tune(r);
    CHECK(ladder.find("Tuning 5%") != std::string::npos);

    write_confusion_csv(r.trials[0].metrics.fusion, dir.path() / "c.csv");
    std::ifstream in(dir.path() / "c.csv");
    std::string header;
    std::getline(in, header);
    CHECK(header.rfind("truth,", 0) == 0);
    int lines = 0;
    for (std::string l; std::getline(in, l);) ++lines;
    CHECK(lines == 8);
}

TEST_CASE("fine-tune planning") {
    const auto table = noisy_table(3, 20);
    std::vector<std::size_t> rows;
    for (std::size_t r = 0; r < table.size(); ++r) {
        if (table.keys()[r].subject_id != "S02") rows.push_back(r);
    }
    const auto none = plan_fine_tune(table, rows, 0.0, 4);
    CHECK(none.tune.empty());
    CHECK(none.eval == rows);
    CHECK(none.warnings.empty());

    std::vector<std::size_t> previous;
    for (double f : {0.02, 0.05, 0.10, 0.20}) {
        INFO("fraction " << f);
        const auto s = plan_fine_tune(table, rows, f, 4);
        CHECK(s.tune.size() == 2 * static_cast<std::size_t>(std::floor(f * 160 + 1e-9)));
        CHECK(disjoint(s.tune, s.eval));
        CHECK(s.tune.size() + s.eval.size() == rows.size());
        CHECK(std::includes(s.tune.begin(), s.tune.end(), previous.begin(), previous.end()));
        previous = s.tune;
        if (f == 0.02) CHECK(!s.warnings.empty());
        if (f == 0.05) {
            CHECK(s.warnings.empty());
            for (const auto& subject : {"S01", "S03"}) {
                std::set<int> classes;
                for (auto r : s.tune) {
                    if (table.keys()[r].subject_id == subject) classes.insert(table.label(r));
                }
                CHECK(classes.size() == 8);
            }
        }
    }
    CHECK(plan_fine_tune(table, rows, 0.1, 4).tune == plan_fine_tune(table, rows, 0.1, 4).tune);
    CHECK_THROWS_AS(plan_fine_tune(table, rows, 1.0, 4), std::invalid_argument);
}

TEST_CASE("classical run on a separable table") {
    const auto table = noisy_table(4, 4);
    EvalConfig cfg;
    cfg.family = ModelFamily::naive_bayes;
    std::ostringstream log;
    int calls = 0;
    RunOptions opt;
    opt.log = &log;
    opt.on_trial = [&](const TrialOutput& out) {
        ++calls;
        CHECK(out.truth.size() == out.trial->test.size());
        for (const auto& p : out.probs) CHECK(p.rows() == static_cast<Eigen::Index>(out.truth.size()));
        CHECK(out.classical[0]);
        CHECK_FALSE(out.deep[0]);
    };
    const auto report = run_scheme(table, plan_random_segment_split(table, 2, 0.2, 0.1, 1), cfg, opt);
    CHECK(calls == 2);
    REQUIRE(report.trials.size() == 2);
    for (const auto& t : report.trials) {
        CHECK(t.metrics.fusion.accuracy == 1.0);
        CHECK(t.n_test == 25);
    }
    CHECK(report.model == "naive_bayes");
    CHECK_FALSE(log.str().empty());

    const auto loso = run_scheme(table, plan_leave_subjects_out(table, 0.5, 2), cfg);
    CHECK(loso.trials.size() == 2);
    CHECK(loso.trials[0].test_subjects.size() == 2);
}

TEST_CASE("deep run, saved models and untuned ladder rung") {
    fixtures::TempDir dir("run");
    const auto table = noisy_table(3, 2);
    EvalConfig cfg;
    cfg.family = ModelFamily::cnn;
    cfg.cnn.segment_samples = 5000;
    cfg.cnn.decimation = 50;
    cfg.cnn.filters = {4};
    cfg.cnn.pool_size = 4;
    cfg.cnn.head = {8};
    cfg.train.epochs = 2;
    cfg.train.learning_rate = 1e-2;
    std::array<std::shared_ptr<const TrainedModel>, kNumSensors> models;
    RunOptions opt;
    opt.model_dir = dir.path();
    opt.on_trial = [&](const TrialOutput& out) {
        if (out.index == 0) models = out.deep;
    };
    const auto plan = plan_leave_subjects_out(table, 1.0 / 3.0, 5);
    const auto report = run_scheme(table, plan, cfg, opt);
    REQUIRE(report.trials.size() == 3);
    CHECK(std::filesystem::exists(dir.path() / "trial_0" / "lfoot" / "params.bin"));

    FineTuneConfig ft;
    ft.fractions = {0.0, 0.25};
    ft.tune.epochs = 1;
    std::vector<std::vector<std::string>> warnings;
    const auto rungs = fine_tune_trial(models, table, plan.trials[0], 0, ft, &warnings);
    REQUIRE(rungs.size() == 2);
    CHECK(warnings.size() == 2);
    for (int c = 0; c < kNumColumns; ++c) {
        CHECK(rungs[0].column(c).accuracy == report.trials[0].metrics.column(c).accuracy);
        CHECK(rungs[0].column(c).confusion == report.trials[0].metrics.column(c).confusion);
    }
    CHECK(rungs[1].fusion.total() == 12);

    auto missing = models;
    missing[3].reset();
    CHECK_THROWS_AS(fine_tune_trial(missing, table, plan.trials[0], 0, ft), std::invalid_argument);
}

TEST_CASE("derived seeds differ by stream") {
    std::set<std::uint64_t> seen;
    for (std::uint64_t a = 0; a < 10; ++a) {
        for (std::uint64_t b = 0; b < 10; ++b) seen.insert(derive_seed(42, a, b));
    }
    CHECK(seen.size() == 100);
    CHECK(derive_seed(42, 1, 2) == derive_seed(42, 1, 2));
}
