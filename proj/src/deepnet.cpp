#include "runstyle/deepnet.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>

#include "runstyle/domain.hpp"

namespace runstyle {

namespace fs = std::filesystem;
using nlohmann::json;
using FMat = nn::Mat<float>;

TrainConfig TrainConfig::desk() {
    TrainConfig c;
    c.epochs = 30;
    c.learning_rate = 1e-3;
    c.patience = 6;
    return c;
}

void TrainConfig::validate() const {
    if (epochs < 1) throw std::invalid_argument("TrainConfig: epochs must be >= 1");
    if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
    if (!(learning_rate > 0.0)) throw std::invalid_argument("TrainConfig: learning_rate must be > 0");
    if (patience && *patience < 1) throw std::invalid_argument("TrainConfig: patience must be >= 1");
}

void to_json(json& j, const TrainConfig& c) {
    j = json{{"epochs", c.epochs},
             {"batch_size", c.batch_size},
             {"learning_rate", c.learning_rate},
             {"seed", c.seed},
             {"patience", c.patience ? json(*c.patience) : json(nullptr)}};
}

void from_json(const json& j, TrainConfig& c) {
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.seed = j.value("seed", c.seed);
    if (j.contains("patience")) {
        if (j["patience"].is_null()) {
            c.patience.reset();
        } else {
            c.patience = j["patience"].get<int>();
        }
    }
}

std::unique_ptr<nn::Network<float>> build_cnn_lstm(const CnnLstmSpec& spec, std::uint64_t seed) {
    return std::make_unique<nn::CnnLstmNet<float>>(spec, seed);
}

std::unique_ptr<nn::Network<float>> build_cnn(const CnnSpec& spec, std::uint64_t seed) {
    return std::make_unique<nn::CnnNet<float>>(spec, seed);
}

std::unique_ptr<nn::Network<float>> build_network(const DeepSpec& spec, std::uint64_t seed) {
    return std::visit(
        [seed](const auto& s) -> std::unique_ptr<nn::Network<float>> {
            using S = std::decay_t<decltype(s)>;
            if constexpr (std::is_same_v<S, CnnLstmSpec>) {
                return build_cnn_lstm(s, seed);
            } else {
                return build_cnn(s, seed);
            }
        },
        spec);
}

namespace {

int spec_samples(const DeepSpec& spec) {
    return std::visit([](const auto& s) { return s.segment_samples; }, spec);
}

int spec_classes(const DeepSpec& spec) {
    return std::visit([](const auto& s) { return s.classes; }, spec);
}

void copy_params(nn::Network<float>& from, nn::Network<float>& to) {
    auto src = from.params();
    auto dst = to.params();
    if (src.size() != dst.size()) throw std::logic_error("copy_params: topology mismatch");
    for (std::size_t i = 0; i < src.size(); ++i) dst[i]->value = src[i]->value;
}

std::vector<FMat> snapshot(nn::Network<float>& net) {
    std::vector<FMat> out;
    for (auto* p : net.params()) out.push_back(p->value);
    return out;
}

void restore(nn::Network<float>& net, const std::vector<FMat>& values) {
    auto ps = net.params();
    for (std::size_t i = 0; i < ps.size(); ++i) ps[i]->value = values[i];
}

NormStats compute_norm(std::span<const Segment> segs) {
    std::array<double, 3> sum{}, sq{};
    double n = 0.0;
    for (const auto& s : segs) {
        for (const auto& x : s.data()) {
            for (int a = 0; a < 3; ++a) sum[static_cast<std::size_t>(a)] += x.axis(a);
        }
        n += static_cast<double>(s.size());
    }
    NormStats st;
    for (std::size_t a = 0; a < 3; ++a) st.mean[a] = sum[a] / n;
    for (const auto& s : segs) {
        for (const auto& x : s.data()) {
            for (int a = 0; a < 3; ++a) {
                const double d = x.axis(a) - st.mean[static_cast<std::size_t>(a)];
                sq[static_cast<std::size_t>(a)] += d * d;
            }
        }
    }
    for (std::size_t a = 0; a < 3; ++a) {
        const double sd = std::sqrt(sq[a] / n);
        st.std[a] = sd > 0.0 ? sd : 1.0;
    }
    return st;
}

void check_shape(std::span<const Segment> segs, int samples) {
    for (const auto& s : segs) {
        if (s.size() != static_cast<std::size_t>(samples)) {
            throw ContractError("segment has " + std::to_string(s.size()) + " samples, model expects " +
                                std::to_string(samples));
        }
    }
}

// Writes the normalized samples of `segs[idx[i]]` into rows [i*samples, ...).
FMat pack(std::span<const Segment> segs, std::span<const std::size_t> idx, int samples,
          const NormStats& norm) {
    FMat x(static_cast<Eigen::Index>(idx.size()) * samples, 3);
    float* out = x.data();
    const float m0 = static_cast<float>(norm.mean[0]), m1 = static_cast<float>(norm.mean[1]),
                m2 = static_cast<float>(norm.mean[2]);
    const float s0 = static_cast<float>(1.0 / norm.std[0]), s1 = static_cast<float>(1.0 / norm.std[1]),
                s2 = static_cast<float>(1.0 / norm.std[2]);
    for (std::size_t i : idx) {
        for (const auto& v : segs[i].data()) {
            *out++ = (static_cast<float>(v.ax) - m0) * s0;
            *out++ = (static_cast<float>(v.ay) - m1) * s1;
            *out++ = (static_cast<float>(v.az) - m2) * s2;
        }
    }
    return x;
}

FMat gather(const FMat& all, std::span<const std::size_t> idx, int samples) {
    FMat x(static_cast<Eigen::Index>(idx.size()) * samples, all.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) {
        x.middleRows(static_cast<Eigen::Index>(i) * samples, samples) =
            all.middleRows(static_cast<Eigen::Index>(idx[i]) * samples, samples);
    }
    return x;
}

constexpr int kPredictBatch = 64;

struct EvalResult {
    double loss = 0.0;
    double accuracy = 0.0;
};

// `all` holds stemmed segments of `rows_per` rows each.
EvalResult evaluate(nn::Network<float>& net, const FMat& all, std::span<const int> y, int rows_per) {
    const std::size_t n = y.size();
    double loss = 0.0;
    std::size_t correct = 0;
    for (std::size_t b = 0; b < n; b += kPredictBatch) {
        const std::size_t e = std::min(n, b + kPredictBatch);
        const auto rows = static_cast<Eigen::Index>(e - b);
        const FMat x = all.middleRows(static_cast<Eigen::Index>(b) * rows_per, rows * rows_per);
        const FMat logits = net.forward_stemmed(x, static_cast<int>(rows));
        FMat grad;
        std::vector<int> labels(y.begin() + static_cast<std::ptrdiff_t>(b),
                                y.begin() + static_cast<std::ptrdiff_t>(e));
        loss += nn::cross_entropy(logits, labels, grad) * static_cast<double>(rows);
        for (Eigen::Index r = 0; r < rows; ++r) {
            Eigen::Index arg = 0;
            logits.row(r).maxCoeff(&arg);
            if (arg == labels[static_cast<std::size_t>(r)]) ++correct;
        }
    }
    return {loss / static_cast<double>(n), static_cast<double>(correct) / static_cast<double>(n)};
}

void check_labels(std::span<const int> y, int classes) {
    for (int v : y) {
        if (v < 0 || v >= classes) {
            throw std::invalid_argument("label " + std::to_string(v) + " outside 0-" +
                                        std::to_string(classes - 1));
        }
    }
}

void fit(TrainedModel& model, std::span<const Segment> train_x, std::span<const int> train_y,
         std::span<const Segment> val_x, std::span<const int> val_y, const TrainConfig& cfg) {
    cfg.validate();
    if (train_x.empty()) throw std::invalid_argument("train: empty training set");
    if (train_x.size() != train_y.size() || val_x.size() != val_y.size()) {
        throw std::invalid_argument("train: segment and label counts differ");
    }
    const int samples = spec_samples(model.spec());
    check_shape(train_x, samples);
    check_shape(val_x, samples);
    check_labels(train_y, spec_classes(model.spec()));
    check_labels(val_y, spec_classes(model.spec()));

    auto& net = model.network();
    std::vector<std::size_t> order(train_x.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    // The stem has no parameters, so it is applied once up front.
    const int rows_per = samples / net.decimation();
    const FMat train_all = net.stem(pack(train_x, order, samples, model.norm()));
    std::vector<std::size_t> val_order(val_x.size());
    std::iota(val_order.begin(), val_order.end(), std::size_t{0});
    const FMat val_all =
        val_x.empty() ? FMat(0, 3) : net.stem(pack(val_x, val_order, samples, model.norm()));

    std::seed_seq seq{static_cast<std::uint32_t>(cfg.seed), static_cast<std::uint32_t>(cfg.seed >> 32),
                      0x5348u};
    std::mt19937_64 rng(seq);
    nn::Adam<float> adam(cfg.learning_rate);
    const auto params = net.params();

    double best = std::numeric_limits<double>::infinity();
    std::vector<FMat> best_values;
    int since_best = 0;
    auto& history = model.history();
    const int epoch0 = history.empty() ? 0 : history.back().epoch;

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double loss_sum = 0.0;
        for (std::size_t b = 0; b < order.size(); b += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t e = std::min(order.size(), b + static_cast<std::size_t>(cfg.batch_size));
            std::span<const std::size_t> idx(order.data() + b, e - b);
            const FMat x = gather(train_all, idx, rows_per);
            std::vector<int> labels;
            labels.reserve(idx.size());
            for (std::size_t i : idx) labels.push_back(train_y[i]);
            net.zero_grad();
            const FMat logits = net.forward_stemmed(x, static_cast<int>(idx.size()));
            FMat grad;
            loss_sum += nn::cross_entropy(logits, labels, grad) * static_cast<double>(idx.size());
            net.backward(grad);
            adam.step(params);
        }
        EpochRecord rec;
        rec.epoch = epoch0 + epoch;
        rec.train_loss = loss_sum / static_cast<double>(order.size());
        if (!val_x.empty()) {
            const auto ev = evaluate(net, val_all, val_y, rows_per);
            rec.val_loss = ev.loss;
            rec.val_accuracy = ev.accuracy;
        } else {
            rec.val_loss = std::numeric_limits<double>::quiet_NaN();
            rec.val_accuracy = std::numeric_limits<double>::quiet_NaN();
        }
        history.push_back(rec);

        if (val_x.empty()) {
            model.set_best_epoch(rec.epoch);
            continue;
        }
        if (rec.val_loss < best) {
            best = rec.val_loss;
            best_values = snapshot(net);
            model.set_best_epoch(rec.epoch);
            since_best = 0;
        } else if (cfg.patience && ++since_best >= *cfg.patience) {
            break;
        }
    }
    if (!best_values.empty()) restore(net, best_values);
}

json history_json(const std::vector<EpochRecord>& h, int best_epoch) {
    json rows = json::array();
    auto num = [](double v) { return std::isfinite(v) ? json(v) : json(nullptr); };
    for (const auto& r : h) {
        rows.push_back({{"epoch", r.epoch},
                        {"train_loss", r.train_loss},
                        {"val_loss", num(r.val_loss)},
                        {"val_accuracy", num(r.val_accuracy)}});
    }
    return json{{"best_epoch", best_epoch}, {"epochs", rows}};
}

json read_json(const fs::path& p) {
    std::ifstream in(p);
    if (!in) throw std::runtime_error("cannot open " + p.string());
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw std::runtime_error(p.string() + ": " + e.what());
    }
}

void write_json(const fs::path& p, const json& j) {
    std::ofstream out(p);
    out << j.dump(2) << '\n';
    if (!out) throw std::runtime_error("cannot write " + p.string());
}

}  // namespace

TrainedModel::TrainedModel(DeepSpec spec, std::unique_ptr<nn::Network<float>> net, NormStats norm)
    : spec_(std::move(spec)), net_(std::move(net)), norm_(norm) {
    if (!net_) throw std::invalid_argument("TrainedModel: null network");
}

TrainedModel::TrainedModel(const TrainedModel& other)
    : spec_(other.spec_),
      net_(build_network(other.spec_, 0)),
      norm_(other.norm_),
      history_(other.history_),
      best_epoch_(other.best_epoch_) {
    copy_params(*other.net_, *net_);
}

TrainedModel& TrainedModel::operator=(const TrainedModel& other) {
    if (this != &other) *this = TrainedModel(other);
    return *this;
}

std::string TrainedModel::family() const {
    return std::holds_alternative<CnnLstmSpec>(spec_) ? "cnn_lstm" : "cnn";
}

Eigen::MatrixXd TrainedModel::predict_proba(std::span<const Segment> segments) const {
    const int samples = spec_samples(spec_);
    check_shape(segments, samples);
    const int classes = spec_classes(spec_);
    Eigen::MatrixXd out(static_cast<Eigen::Index>(segments.size()), classes);
    std::vector<std::size_t> idx;
    for (std::size_t b = 0; b < segments.size(); b += kPredictBatch) {
        const std::size_t e = std::min(segments.size(), b + kPredictBatch);
        idx.resize(e - b);
        std::iota(idx.begin(), idx.end(), b);
        const FMat x = pack(segments, idx, samples, norm_);
        const FMat logits = net_->forward(x, static_cast<int>(idx.size()));
        for (Eigen::Index r = 0; r < logits.rows(); ++r) {
            // Softmax in double so rows sum to one at double precision.
            Eigen::VectorXd z = logits.row(r).cast<double>().transpose();
            z = (z.array() - z.maxCoeff()).exp().matrix();
            out.row(static_cast<Eigen::Index>(b) + r) = (z / z.sum()).transpose();
        }
    }
    return out;
}

Eigen::VectorXd TrainedModel::predict_proba(const Segment& segment) const {
    return predict_proba(std::span<const Segment>(&segment, 1)).row(0).transpose();
}

void TrainedModel::save(const fs::path& dir) const {
    fs::create_directories(dir);
    json spec = std::visit([](const auto& s) { return json(s); }, spec_);
    write_json(dir / "spec.json", spec);
    write_json(dir / "norm.json", json{{"mean", norm_.mean}, {"std", norm_.std}});
    write_json(dir / "history.json", history_json(history_, best_epoch_));
    std::ofstream out(dir / "params.bin", std::ios::binary);
    for (const auto* p : net_->params()) {
        out.write(reinterpret_cast<const char*>(p->value.data()),
                  static_cast<std::streamsize>(p->value.size() * sizeof(float)));
    }
    if (!out) throw std::runtime_error("cannot write " + (dir / "params.bin").string());
}

TrainedModel TrainedModel::load(const fs::path& dir) {
    for (const char* name : {"spec.json", "norm.json", "params.bin"}) {
        if (!fs::exists(dir / name)) throw std::runtime_error("missing model artifact " + (dir / name).string());
    }
    const json sj = read_json(dir / "spec.json");
    const std::string type = sj.value("type", std::string());
    DeepSpec spec;
    if (type == "cnn_lstm") {
        spec = sj.get<CnnLstmSpec>();
    } else if (type == "cnn") {
        spec = sj.get<CnnSpec>();
    } else {
        throw std::runtime_error((dir / "spec.json").string() + ": unknown model type '" + type + "'");
    }
    std::visit([](const auto& s) { s.validate(); }, spec);
    const json nj = read_json(dir / "norm.json");
    NormStats norm;
    norm.mean = nj.at("mean").get<std::array<double, 3>>();
    norm.std = nj.at("std").get<std::array<double, 3>>();

    TrainedModel model(spec, build_network(spec, 0), norm);
    std::ifstream in(dir / "params.bin", std::ios::binary);
    for (auto* p : model.net_->params()) {
        in.read(reinterpret_cast<char*>(p->value.data()),
                static_cast<std::streamsize>(p->value.size() * sizeof(float)));
        if (!in) throw std::runtime_error((dir / "params.bin").string() + ": truncated parameter blob");
    }
    if (in.peek() != std::char_traits<char>::eof()) {
        throw std::runtime_error((dir / "params.bin").string() + ": parameter blob larger than the spec");
    }
    if (fs::exists(dir / "history.json")) {
        const json hj = read_json(dir / "history.json");
        model.best_epoch_ = hj.value("best_epoch", 0);
        auto num = [](const json& v) {
            return v.is_null() ? std::numeric_limits<double>::quiet_NaN() : v.get<double>();
        };
        for (const auto& r : hj.at("epochs")) {
            model.history_.push_back({r.at("epoch").get<int>(), r.at("train_loss").get<double>(),
                                      num(r.at("val_loss")), num(r.at("val_accuracy"))});
        }
    }
    return model;
}

TrainedModel train(const DeepSpec& spec, std::span<const Segment> train_x,
                   std::span<const int> train_y, std::span<const Segment> val_x,
                   std::span<const int> val_y, const TrainConfig& cfg) {
    if (train_x.empty()) throw std::invalid_argument("train: empty training set");
    std::visit([](const auto& s) { s.validate(); }, spec);
    check_shape(train_x, spec_samples(spec));
    TrainedModel model(spec, build_network(spec, cfg.seed), compute_norm(train_x));
    fit(model, train_x, train_y, val_x, val_y, cfg);
    return model;
}

TrainedModel continue_training(const TrainedModel& model, std::span<const Segment> train_x,
                               std::span<const int> train_y, std::span<const Segment> val_x,
                               std::span<const int> val_y, const TrainConfig& cfg) {
    TrainedModel tuned(model);
    fit(tuned, train_x, train_y, val_x, val_y, cfg);
    return tuned;
}

Eigen::VectorXd fuse_scores(std::span<const Eigen::VectorXd> probs) {
    if (probs.size() != static_cast<std::size_t>(kNumSensors)) {
        throw ContractError("fuse_scores: expected " + std::to_string(kNumSensors) +
                            " probability vectors, got " + std::to_string(probs.size()));
    }
    const Eigen::Index k = probs.front().size();
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(k);
    for (const auto& p : probs) {
        if (p.size() != k || k == 0) throw ContractError("fuse_scores: vectors differ in length");
        if (!p.allFinite() || p.minCoeff() < 0.0 || std::abs(p.sum() - 1.0) > 1e-5) {
            throw ContractError("fuse_scores: input is not a probability vector");
        }
        sum += p;
    }
    return sum / static_cast<double>(probs.size());
}

int argmax(const Eigen::VectorXd& p) {
    int best = 0;
    for (Eigen::Index i = 1; i < p.size(); ++i) {
        if (p[i] > p[best]) best = static_cast<int>(i);
    }
    return best;
}

}  // namespace runstyle
