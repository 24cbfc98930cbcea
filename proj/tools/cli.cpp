#include "cli.hpp"

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <memory>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "runstyle/evaluation.hpp"
#include "runstyle/ingest.hpp"
#include "runstyle/synthgait.hpp"
#include "runstyle/windowing.hpp"

namespace runstyle::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

/// Thrown for bad flag combinations found after parsing.
class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct Profile {
    std::string name = "desk";
    bool full() const { return name == "full"; }
    double duration_s() const { return full() ? 300.0 : 120.0; }
};

struct DataOptions {
    std::string data;  // manifest path or dataset directory; empty = synthesize
    double p = 0.15;
    std::uint64_t data_seed = 42;
};

fs::path output_root(const std::string& flag) {
    if (!flag.empty()) return flag;
    if (const char* env = std::getenv(kOutEnv); env && *env) return env;
    return "runs";
}

fs::path stamped_dir(const fs::path& root, const std::string& tag) {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    localtime_r(&now, &tm);
    std::ostringstream name;
    name << std::put_time(&tm, "%Y%m%d-%H%M%S") << "_" << tag;
    fs::path dir = root / name.str();
    for (int k = 2; fs::exists(dir); ++k) dir = root / (name.str() + "-" + std::to_string(k));
    fs::create_directories(dir);
    return dir;
}

void write_json(const fs::path& path, const json& j) {
    std::ofstream out(path);
    out << j.dump(2) << "\n";
    if (!out) throw std::runtime_error("cannot write " + path.string());
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path);
    out << text;
    if (!out) throw std::runtime_error("cannot write " + path.string());
}

json read_json(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read " + path.string());
    return json::parse(in);
}

json data_json(const DataOptions& d, const Profile& profile) {
    if (!d.data.empty()) {
        fs::path p = d.data;
        if (fs::is_directory(p)) p /= "manifest.json";
        return {{"manifest", fs::absolute(p).lexically_normal().string()}};
    }
    GeneratorConfig g;
    g.personalization = d.p;
    g.seed = d.data_seed;
    g.duration_s = profile.duration_s();
    return {{"synthetic", g}};
}

std::shared_ptr<const Dataset> load_data(const json& source) {
    if (source.contains("manifest")) {
        const fs::path manifest = source.at("manifest").get<std::string>();
        if (!fs::exists(manifest)) throw std::runtime_error("missing dataset manifest " + manifest.string());
        return std::make_shared<const Dataset>(load_manifest(manifest));
    }
    return std::make_shared<const Dataset>(generate_dataset(source.at("synthetic").get<GeneratorConfig>()));
}

EvalConfig eval_config(ModelFamily family, const Profile& profile, std::uint64_t seed) {
    EvalConfig cfg;
    cfg.family = family;
    if (profile.full()) {
        cfg.cnn_lstm = CnnLstmSpec::full();
        cfg.cnn = CnnSpec::full();
        cfg.train = TrainConfig{};
    }
    cfg.train.seed = seed;
    return cfg;
}

void add_data_flags(CLI::App& cmd, DataOptions& d) {
    cmd.add_option("--data", d.data, "Dataset manifest or directory (default: synthesize)");
    cmd.add_option("--p", d.p, "Personalization level of the synthesized dataset")->check(CLI::Range(0.0, 1.0));
    cmd.add_option("--data-seed", d.data_seed, "Generator seed of the synthesized dataset");
}

// ---------------------------------------------------------------- synth

struct SynthOptions {
    std::string out;
    double p = 0.15;
    std::uint64_t seed = 42;
    int subjects = 10;
    double duration = 0.0;
    bool force = false;
};

int cmd_synth(const SynthOptions& o, const Profile& profile, std::ostream& out) {
    GeneratorConfig g;
    g.personalization = o.p;
    g.seed = o.seed;
    g.n_subjects = o.subjects;
    g.duration_s = o.duration > 0.0 ? o.duration : profile.duration_s();
    const fs::path dir = o.out.empty() ? output_root("") / "data" : fs::path(o.out);
    if (!o.force && fs::exists(dir) && !fs::is_empty(dir)) {
        throw UsageError("output directory " + dir.string() + " is not empty (use --force)");
    }
    const fs::path manifest = write_generated_dataset(g, dir, o.force);
    out << manifest.string() << "\n";
    return kOk;
}

// ----------------------------------------------------------------- eval

struct EvalOptions {
    std::string scheme = "random_segments";
    std::string model = "cnn_lstm";
    std::uint64_t seed = 0;
    int trials = 5;
    std::string out;
    DataOptions data;
};

int cmd_eval(const EvalOptions& o, const Profile& profile, std::ostream& out, std::ostream& err) {
    const auto scheme = parse_scheme(o.scheme);
    const auto family = parse_family(o.model);
    if (!scheme) throw UsageError("unknown scheme " + o.scheme);
    if (!family) throw UsageError("unknown model " + o.model);

    const EvalConfig cfg = eval_config(*family, profile, o.seed);
    const json source = data_json(o.data, profile);
    const fs::path run_dir = stamped_dir(output_root(o.out), "eval_" + o.model + "_" + o.scheme);
    json config = {{"command", "eval"},
                   {"profile", profile.name},
                   {"scheme", o.scheme},
                   {"model", o.model},
                   {"seed", o.seed},
                   {"trials", o.trials},
                   {"data", source},
                   {"eval", to_json(cfg)}};
    write_json(run_dir / "config.json", config);
    err << "run directory " << run_dir.string() << std::endl;

    const auto table = segment_dataset(load_data(source));
    const SplitPlan plan = *scheme == Scheme::random_segments
                               ? plan_random_segment_split(table, o.trials, 0.2, 0.1, o.seed)
                               : plan_leave_subjects_out(table, 0.2, o.seed);
    write_json(run_dir / "split.json", plan_to_json(plan, table));

    RunOptions ro;
    ro.model_dir = run_dir / "models";
    ro.log = &err;
    EvaluationReport report = run_scheme(table, plan, cfg, ro);
    report.config = config;
    write_json(run_dir / "report.json", to_json(report));
    const std::string rendered = render_table(std::span<const EvaluationReport>(&report, 1));
    write_text(run_dir / "table.txt", rendered);
    fs::create_directories(run_dir / "confusion");
    for (const auto& t : report.trials) {
        for (int c = 0; c < kNumColumns; ++c) {
            write_confusion_csv(t.metrics.column(c), run_dir / "confusion" /
                                                         ("trial_" + std::to_string(t.index) + "_" + column_name(c) + ".csv"));
        }
    }
    out << rendered << run_dir.string() << "\n";
    return kOk;
}

// ------------------------------------------------------------- finetune

struct FineTuneOptions {
    std::string run;
    std::vector<double> fractions{0.0, 0.02, 0.05, 0.10, 0.20};
    std::optional<std::uint64_t> seed;
    std::optional<int> epochs;
    std::optional<double> lr;
};

int cmd_finetune(const FineTuneOptions& o, std::ostream& out, std::ostream& err) {
    for (double f : o.fractions) {
        if (!(f >= 0.0 && f < 1.0)) throw UsageError("fractions must lie in [0, 1)");
    }
    const fs::path run_dir = o.run;
    const fs::path config_path = run_dir / "config.json";
    const fs::path report_path = run_dir / "report.json";
    if (!fs::exists(config_path)) throw std::runtime_error("missing run artifact " + config_path.string());
    if (!fs::exists(report_path)) throw std::runtime_error("missing run artifact " + report_path.string());
    const json config = read_json(config_path);
    if (config.at("scheme").get<std::string>() != "leave_subjects_out") {
        throw UsageError("finetune needs a leave_subjects_out run, got " + config.at("scheme").get<std::string>());
    }
    const auto family = parse_family(config.at("model").get<std::string>());
    if (!family || !is_deep(*family)) {
        throw UsageError("finetune needs a cnn_lstm or cnn run, got " + config.at("model").get<std::string>());
    }
    const auto seed = config.at("seed").get<std::uint64_t>();

    const auto table = segment_dataset(load_data(config.at("data")));
    const SplitPlan plan = plan_leave_subjects_out(table, 0.2, seed);

    std::vector<std::array<std::shared_ptr<const TrainedModel>, kNumSensors>> models(plan.trials.size());
    for (std::size_t k = 0; k < plan.trials.size(); ++k) {
        for (std::size_t s = 0; s < kNumSensors; ++s) {
            const fs::path dir = run_dir / "models" / ("trial_" + std::to_string(k)) /
                                 std::string(to_string(index_sensor(static_cast<int>(s))));
            models[k][s] = std::make_shared<const TrainedModel>(TrainedModel::load(dir));
        }
    }

    FineTuneConfig ft;
    ft.fractions = o.fractions;
    ft.seed = o.seed.value_or(seed);
    ft.tune.learning_rate = config.at("eval").at("train").at("learning_rate").get<double>();
    ft.tune.seed = ft.seed;
    if (o.epochs) ft.tune.epochs = *o.epochs;
    if (o.lr) ft.tune.learning_rate = *o.lr;
    ft.tune.validate();

    EvaluationReport report = report_from_json(read_json(report_path));
    report.fine_tuning.clear();
    for (double f : ft.fractions) report.fine_tuning.push_back(FineTuneRow{f, {}, {}});
    for (std::size_t k = 0; k < plan.trials.size(); ++k) {
        std::vector<std::vector<std::string>> warnings;
        const auto rows = fine_tune_trial(models[k], table, plan.trials[k], static_cast<int>(k), ft, &warnings);
        for (std::size_t r = 0; r < rows.size(); ++r) {
            report.fine_tuning[r].trials.push_back(rows[r]);
            for (const auto& w : warnings[r]) {
                err << "warning: trial " << k << ": " << w << std::endl;
                report.fine_tuning[r].warnings.push_back("trial " + std::to_string(k) + ": " + w);
            }
        }
        err << "finetune trial " << k + 1 << "/" << plan.trials.size() << " done" << std::endl;
    }
    write_json(run_dir / "finetune_config.json", {{"command", "finetune"}, {"finetune", to_json(ft)}});
    write_json(report_path, to_json(report));
    const std::string rendered = render_fine_tune(report);
    write_text(run_dir / "finetune.txt", rendered);
    out << rendered;
    return kOk;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Running-style classification workbench", "runstyle"};
    app.require_subcommand(1);
    Profile profile;
    app.add_option("--profile", profile.name, "desk (120 s, 30 epochs) or full (300 s, 300 epochs)")
        ->check(CLI::IsMember({"desk", "full"}));

    SynthOptions so;
    auto* synth = app.add_subcommand("synth", "Write a synthetic dataset and manifest");
    synth->add_option("--out", so.out, "Output directory (default: $RUNSTYLE_OUT/data)");
    synth->add_option("--p", so.p, "Personalization level")->check(CLI::Range(0.0, 1.0));
    synth->add_option("--seed", so.seed, "Generator seed");
    synth->add_option("--subjects", so.subjects, "Number of subjects")->check(CLI::PositiveNumber);
    synth->add_option("--duration", so.duration, "Seconds per recording (default from profile)")
        ->check(CLI::PositiveNumber);
    synth->add_flag("--force", so.force, "Write into a non-empty directory");

    EvalOptions eo;
    auto* eval = app.add_subcommand("eval", "Train and score one model family under one scheme");
    eval->add_option("--scheme", eo.scheme, "random_segments or leave_subjects_out")
        ->check(CLI::IsMember({"random_segments", "leave_subjects_out"}));
    eval->add_option("--model", eo.model, "cnn_lstm, cnn, naive_bayes, decision_tree, svm, bagged_tree_ensemble")
        ->check(CLI::IsMember({"cnn_lstm", "cnn", "naive_bayes", "decision_tree", "svm", "bagged_tree_ensemble"}));
    eval->add_option("--seed", eo.seed, "Split and training seed");
    eval->add_option("--trials", eo.trials, "Trials for random_segments")->check(CLI::PositiveNumber);
    eval->add_option("--out", eo.out, "Output root (default: $RUNSTYLE_OUT or ./runs)");
    add_data_flags(*eval, eo.data);

    FineTuneOptions fo;
    auto* finetune = app.add_subcommand("finetune", "Run the fine-tuning ladder on a leave_subjects_out run");
    finetune->add_option("--run", fo.run, "Run directory written by eval")->required();
    finetune->add_option("--fractions", fo.fractions, "Comma-separated tuning fractions")->delimiter(',');
    finetune->add_option("--seed", fo.seed, "Tuning seed (default: the run's seed)");
    finetune->add_option("--epochs", fo.epochs, "Tuning epochs (default 50)")->check(CLI::PositiveNumber);
    finetune->add_option("--lr", fo.lr, "Tuning learning rate (default: the run's)")->check(CLI::PositiveNumber);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        if (code != 0 && e.get_name() != "CallForHelp") err << app.help();
        return code == 0 ? kOk : kUsageError;
    }

    try {
        if (*synth) return cmd_synth(so, profile, out);
        if (*eval) return cmd_eval(eo, profile, out, err);
        return cmd_finetune(fo, out, err);
    } catch (const UsageError& e) {
        err << "error: " << e.what() << "\n";
        return kUsageError;
    } catch (const std::invalid_argument& e) {
        err << "error: " << e.what() << "\n";
        return kUsageError;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kRuntimeFailure;
    }
}

}  // namespace runstyle::cli
