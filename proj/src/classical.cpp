#include "runstyle/classical.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>

namespace runstyle {

namespace fs = std::filesystem;
using nlohmann::json;
using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

template <typename E, std::size_t N>
E parse_enum(const std::string& s, const std::array<E, N>& all, const char* what) {
    for (E e : all) {
        if (to_string(e) == s) return e;
    }
    throw std::invalid_argument(std::string("unknown ") + what + ": " + s);
}

constexpr std::array kKinds = {ClassicalKind::naive_bayes, ClassicalKind::decision_tree,
                               ClassicalKind::svm, ClassicalKind::bagged_tree_ensemble};
constexpr std::array kKernels = {SvmKernel::cubic_polynomial, SvmKernel::gaussian};
constexpr std::array kSchemes = {SvmScheme::one_vs_one, SvmScheme::one_vs_all};
constexpr std::array kCriteria = {SplitCriterion::max_deviance_reduction, SplitCriterion::twoing};

}  // namespace

std::string_view to_string(ClassicalKind k) {
    switch (k) {
        case ClassicalKind::naive_bayes: return "naive_bayes";
        case ClassicalKind::decision_tree: return "decision_tree";
        case ClassicalKind::svm: return "svm";
        case ClassicalKind::bagged_tree_ensemble: return "bagged_tree_ensemble";
    }
    throw ContractError("invalid ClassicalKind");
}

std::string_view to_string(SvmKernel k) {
    return k == SvmKernel::gaussian ? "gaussian" : "cubic_polynomial";
}

std::string_view to_string(SvmScheme s) {
    return s == SvmScheme::one_vs_all ? "one_vs_all" : "one_vs_one";
}

std::string_view to_string(SplitCriterion c) {
    return c == SplitCriterion::twoing ? "twoing" : "max_deviance_reduction";
}

ClassicalKind parse_classical_kind(const std::string& s) { return parse_enum(s, kKinds, "model kind"); }

void ClassicalConfig::validate() const {
    auto need = [&](bool present, bool wanted, const char* field) {
        if (present != wanted) {
            throw std::invalid_argument(std::string("ClassicalConfig: ") + field +
                                        (wanted ? " is required for " : " is not allowed for ") +
                                        std::string(to_string(kind)));
        }
    };
    need(svm.has_value(), kind == ClassicalKind::svm, "svm");
    need(tree.has_value(), kind == ClassicalKind::decision_tree, "tree");
    need(ensemble.has_value(), kind == ClassicalKind::bagged_tree_ensemble, "ensemble");
    if (svm && !(svm->box_constraint > 0.0)) {
        throw std::invalid_argument("ClassicalConfig: box_constraint must be > 0");
    }
    if (ensemble && ensemble->n_trees < 1) {
        throw std::invalid_argument("ClassicalConfig: n_trees must be >= 1");
    }
}

void to_json(json& j, const ClassicalConfig& c) {
    j = json{{"kind", to_string(c.kind)}, {"sensor", to_string(c.sensor)}, {"seed", c.seed}};
    if (c.svm) {
        j["svm"] = {{"kernel", to_string(c.svm->kernel)},
                    {"scheme", to_string(c.svm->scheme)},
                    {"box_constraint", c.svm->box_constraint}};
    }
    if (c.tree) j["tree"] = {{"split_criterion", to_string(c.tree->split_criterion)}};
    if (c.ensemble) j["ensemble"] = {{"n_trees", c.ensemble->n_trees}};
}

void from_json(const json& j, ClassicalConfig& c) {
    c.kind = parse_classical_kind(j.at("kind").get<std::string>());
    const auto sensor = parse_sensor(j.at("sensor").get<std::string>());
    if (!sensor) throw std::invalid_argument("unknown sensor: " + j.at("sensor").get<std::string>());
    c.sensor = *sensor;
    c.seed = j.value("seed", std::uint64_t{0});
    c.svm.reset();
    c.tree.reset();
    c.ensemble.reset();
    if (j.contains("svm")) {
        const auto& s = j["svm"];
        c.svm = SvmParams{parse_enum(s.at("kernel").get<std::string>(), kKernels, "kernel"),
                          parse_enum(s.at("scheme").get<std::string>(), kSchemes, "scheme"),
                          s.value("box_constraint", 1.0)};
    }
    if (j.contains("tree")) {
        c.tree = TreeParams{
            parse_enum(j["tree"].at("split_criterion").get<std::string>(), kCriteria, "split criterion")};
    }
    if (j.contains("ensemble")) c.ensemble = EnsembleParams{j["ensemble"].value("n_trees", 100)};
    c.validate();
}

ClassicalConfig default_config(ClassicalKind kind, SensorLocation sensor) {
    ClassicalConfig c;
    c.kind = kind;
    c.sensor = sensor;
    switch (kind) {
        case ClassicalKind::naive_bayes: break;
        case ClassicalKind::decision_tree:
            c.tree = TreeParams{sensor == SensorLocation::com ? SplitCriterion::twoing
                                                              : SplitCriterion::max_deviance_reduction};
            break;
        case ClassicalKind::svm:
            c.svm = sensor == SensorLocation::lfoot
                        ? SvmParams{SvmKernel::gaussian, SvmScheme::one_vs_all, 1.0}
                        : SvmParams{SvmKernel::cubic_polynomial, SvmScheme::one_vs_one, 1.0};
            break;
        case ClassicalKind::bagged_tree_ensemble: c.ensemble = EnsembleParams{100}; break;
    }
    return c;
}

// ------------------------------------------------------------- learners

namespace detail {

class Learner {
public:
    virtual ~Learner() = default;
    /// Rows of standardized features to rows of class probabilities.
    virtual MatrixXd proba(const MatrixXd& z) const = 0;
    virtual json params() const = 0;
};

}  // namespace detail

namespace {

constexpr int K = kNumStyles;

using detail::Learner;

std::array<int, K> class_counts(std::span<const int> y) {
    std::array<int, K> c{};
    for (int v : y) ++c[static_cast<std::size_t>(v)];
    return c;
}

// Gaussian naive Bayes with a variance floor of 1e-9 times the largest
// feature variance.
class NaiveBayes final : public Learner {
public:
    NaiveBayes() = default;

    NaiveBayes(const MatrixXd& z, std::span<const int> y) {
        const Index d = z.cols();
        mean_ = MatrixXd::Zero(K, d);
        var_ = MatrixXd::Zero(K, d);
        log_prior_ = VectorXd::Constant(K, -std::numeric_limits<double>::infinity());
        const auto counts = class_counts(y);
        for (Index i = 0; i < z.rows(); ++i) mean_.row(y[static_cast<std::size_t>(i)]) += z.row(i);
        for (int c = 0; c < K; ++c) {
            if (counts[static_cast<std::size_t>(c)] > 0) mean_.row(c) /= counts[static_cast<std::size_t>(c)];
        }
        for (Index i = 0; i < z.rows(); ++i) {
            const int c = y[static_cast<std::size_t>(i)];
            var_.row(c) += (z.row(i) - mean_.row(c)).array().square().matrix();
        }
        double max_var = 0.0;
        for (Index f = 0; f < d; ++f) {
            const double m = z.col(f).mean();
            max_var = std::max(max_var, (z.col(f).array() - m).square().mean());
        }
        const double floor = 1e-9 * std::max(max_var, 1.0);
        for (int c = 0; c < K; ++c) {
            const int n = counts[static_cast<std::size_t>(c)];
            if (n == 0) continue;
            var_.row(c) = (var_.row(c).array() / n + floor).matrix();
            log_prior_[c] = std::log(static_cast<double>(n) / static_cast<double>(z.rows()));
        }
    }

    MatrixXd proba(const MatrixXd& z) const override {
        MatrixXd p(z.rows(), K);
        VectorXd logp(K);
        for (Index i = 0; i < z.rows(); ++i) {
            for (int c = 0; c < K; ++c) {
                if (!std::isfinite(log_prior_[c])) {
                    logp[c] = -std::numeric_limits<double>::infinity();
                    continue;
                }
                const auto diff = z.row(i).array() - mean_.row(c).array();
                logp[c] = log_prior_[c] -
                          0.5 * ((2.0 * M_PI * var_.row(c).array()).log() + diff.square() / var_.row(c).array())
                                    .sum();
            }
            const double m = logp.maxCoeff();
            VectorXd e = (logp.array() - m).exp().matrix();
            p.row(i) = (e / e.sum()).transpose();
        }
        return p;
    }

    json params() const override {
        json j;
        j["type"] = "naive_bayes";
        for (int c = 0; c < K; ++c) {
            const bool present = std::isfinite(log_prior_[c]);
            j["classes"].push_back({{"present", present},
                                    {"log_prior", present ? log_prior_[c] : 0.0},
                                    {"mean", std::vector<double>(mean_.row(c).begin(), mean_.row(c).end())},
                                    {"var", std::vector<double>(var_.row(c).begin(), var_.row(c).end())}});
        }
        return j;
    }

    static std::shared_ptr<NaiveBayes> from(const json& j, Index d) {
        auto nb = std::make_shared<NaiveBayes>();
        nb->mean_ = MatrixXd::Zero(K, d);
        nb->var_ = MatrixXd::Ones(K, d);
        nb->log_prior_ = VectorXd::Constant(K, -std::numeric_limits<double>::infinity());
        const auto& cls = j.at("classes");
        if (cls.size() != K) throw std::runtime_error("naive_bayes: expected 8 classes");
        for (int c = 0; c < K; ++c) {
            const auto& e = cls[static_cast<std::size_t>(c)];
            if (!e.at("present").get<bool>()) continue;
            nb->log_prior_[c] = e.at("log_prior").get<double>();
            const auto m = e.at("mean").get<std::vector<double>>();
            const auto v = e.at("var").get<std::vector<double>>();
            if (static_cast<Index>(m.size()) != d || static_cast<Index>(v.size()) != d) {
                throw std::runtime_error("naive_bayes: feature count mismatch");
            }
            nb->mean_.row(c) = Eigen::Map<const Eigen::RowVectorXd>(m.data(), d);
            nb->var_.row(c) = Eigen::Map<const Eigen::RowVectorXd>(v.data(), d);
        }
        return nb;
    }

private:
    MatrixXd mean_, var_;
    VectorXd log_prior_;
};

// CART tree. Leaves predict their training class frequencies.
class Tree {
public:
    struct Node {
        int feature = -1;
        double threshold = 0.0;
        int left = -1, right = -1;
        std::array<double, K> p{};
    };

    Tree() = default;

    Tree(const MatrixXd& z, std::span<const int> y, std::vector<Index> rows, SplitCriterion criterion,
         int min_parent)
        : criterion_(criterion), min_parent_(min_parent) {
        build(z, y, rows);
    }

    const std::array<double, K>& leaf(const Eigen::Ref<const Eigen::RowVectorXd>& x) const {
        int n = 0;
        while (nodes_[static_cast<std::size_t>(n)].feature >= 0) {
            const Node& nd = nodes_[static_cast<std::size_t>(n)];
            n = x[nd.feature] <= nd.threshold ? nd.left : nd.right;
        }
        return nodes_[static_cast<std::size_t>(n)].p;
    }

    json to_json() const {
        json nodes = json::array();
        for (const auto& nd : nodes_) {
            nodes.push_back({nd.feature, nd.threshold, nd.left, nd.right, nd.p});
        }
        return nodes;
    }

    static Tree from_json(const json& j, Index d) {
        Tree t;
        for (const auto& e : j) {
            Node nd;
            nd.feature = e.at(0).get<int>();
            nd.threshold = e.at(1).get<double>();
            nd.left = e.at(2).get<int>();
            nd.right = e.at(3).get<int>();
            nd.p = e.at(4).get<std::array<double, K>>();
            t.nodes_.push_back(nd);
        }
        const auto n = static_cast<int>(t.nodes_.size());
        if (n == 0) throw std::runtime_error("tree: no nodes");
        for (const auto& nd : t.nodes_) {
            if (nd.feature >= d || (nd.feature >= 0 && (nd.left <= 0 || nd.left >= n || nd.right <= 0 ||
                                                          nd.right >= n))) {
                throw std::runtime_error("tree: malformed node");
            }
        }
        return t;
    }

private:
    static double n_log_n(double n) { return n > 0.0 ? n * std::log(n) : 0.0; }

    // n * entropy, from class counts.
    static double deviance(const std::array<double, K>& c, double n) {
        double s = n_log_n(n);
        for (double v : c) s -= n_log_n(v);
        return s;
    }

    int build(const MatrixXd& z, std::span<const int> y, std::vector<Index>& rows) {
        const int id = static_cast<int>(nodes_.size());
        nodes_.emplace_back();
        std::array<double, K> counts{};
        for (Index r : rows) counts[static_cast<std::size_t>(y[static_cast<std::size_t>(r)])] += 1.0;
        const double n = static_cast<double>(rows.size());
        int present = 0;
        for (std::size_t c = 0; c < K; ++c) {
            nodes_[static_cast<std::size_t>(id)].p[c] = counts[c] / n;
            if (counts[c] > 0) ++present;
        }
        if (present < 2 || static_cast<int>(rows.size()) < min_parent_) return id;

        const double parent_dev = deviance(counts, n);
        double best_score = 1e-12;
        int best_f = -1;
        double best_thr = 0.0;
        std::vector<Index> sorted = rows;
        for (Index f = 0; f < z.cols(); ++f) {
            std::stable_sort(sorted.begin(), sorted.end(),
                             [&](Index a, Index b) { return z(a, f) < z(b, f); });
            std::array<double, K> left{};
            for (std::size_t k = 1; k < sorted.size(); ++k) {
                left[static_cast<std::size_t>(y[static_cast<std::size_t>(sorted[k - 1])])] += 1.0;
                const double lo = z(sorted[k - 1], f), hi = z(sorted[k], f);
                if (!(lo < hi)) continue;
                const double nl = static_cast<double>(k), nr = n - nl;
                std::array<double, K> right{};
                for (std::size_t c = 0; c < K; ++c) right[c] = counts[c] - left[c];
                double score;
                if (criterion_ == SplitCriterion::twoing) {
                    double s = 0.0;
                    for (std::size_t c = 0; c < K; ++c) s += std::abs(left[c] / nl - right[c] / nr);
                    score = (nl / n) * (nr / n) / 4.0 * s * s;
                } else {
                    score = (parent_dev - deviance(left, nl) - deviance(right, nr)) / n;
                }
                if (score > best_score) {
                    best_score = score;
                    best_f = static_cast<int>(f);
                    best_thr = lo + (hi - lo) / 2.0;
                }
            }
        }
        if (best_f < 0) return id;

        std::vector<Index> l, r;
        for (Index row : rows) (z(row, best_f) <= best_thr ? l : r).push_back(row);
        rows.clear();
        rows.shrink_to_fit();
        nodes_[static_cast<std::size_t>(id)].feature = best_f;
        nodes_[static_cast<std::size_t>(id)].threshold = best_thr;
        const int li = build(z, y, l);
        nodes_[static_cast<std::size_t>(id)].left = li;
        const int ri = build(z, y, r);
        nodes_[static_cast<std::size_t>(id)].right = ri;
        return id;
    }

    SplitCriterion criterion_ = SplitCriterion::max_deviance_reduction;
    int min_parent_ = 10;
    std::vector<Node> nodes_;
};

class TreeLearner final : public Learner {
public:
    explicit TreeLearner(Tree t) : tree_(std::move(t)) {}

    MatrixXd proba(const MatrixXd& z) const override {
        MatrixXd p(z.rows(), K);
        for (Index i = 0; i < z.rows(); ++i) {
            const auto& leaf = tree_.leaf(z.row(i));
            for (int c = 0; c < K; ++c) p(i, c) = leaf[static_cast<std::size_t>(c)];
        }
        return p;
    }

    json params() const override { return {{"type", "decision_tree"}, {"nodes", tree_.to_json()}}; }

private:
    Tree tree_;
};

// Bootstrap-aggregated full-depth trees; probabilities are vote fractions.
class BaggedTrees final : public Learner {
public:
    explicit BaggedTrees(std::vector<Tree> trees) : trees_(std::move(trees)) {}

    MatrixXd proba(const MatrixXd& z) const override {
        MatrixXd p = MatrixXd::Zero(z.rows(), K);
        for (Index i = 0; i < z.rows(); ++i) {
            for (const auto& t : trees_) {
                const auto& leaf = t.leaf(z.row(i));
                int best = 0;
                for (int c = 1; c < K; ++c) {
                    if (leaf[static_cast<std::size_t>(c)] > leaf[static_cast<std::size_t>(best)]) best = c;
                }
                p(i, best) += 1.0;
            }
        }
        return p / static_cast<double>(trees_.size());
    }

    json params() const override {
        json trees = json::array();
        for (const auto& t : trees_) trees.push_back(t.to_json());
        return {{"type", "bagged_tree_ensemble"}, {"trees", trees}};
    }

private:
    std::vector<Tree> trees_;
};

// ------------------------------------------------------------------ SVM

MatrixXd kernel_matrix(SvmKernel k, const MatrixXd& a, const MatrixXd& b) {
    const double d = static_cast<double>(a.cols());
    MatrixXd g = a * b.transpose() / d;
    if (k == SvmKernel::gaussian) {
        const VectorXd na = a.rowwise().squaredNorm() / d;
        const VectorXd nb = b.rowwise().squaredNorm() / d;
        for (Index i = 0; i < g.rows(); ++i) {
            for (Index j = 0; j < g.cols(); ++j) g(i, j) = std::exp(-std::max(0.0, na[i] + nb[j] - 2.0 * g(i, j)));
        }
    } else {
        g = (g.array() + 1.0).cube().matrix();
    }
    return g;
}

struct BinaryMachine {
    int positive = 0;
    int negative = -1;  // -1: all other classes
    std::vector<int> sv;  // rows of the shared support-vector matrix
    std::vector<double> coef;  // alpha_i * y_i
    double rho = 0.0;
};

// Dual coordinate solver with second-order working-set selection.
// `rows` index into the precomputed kernel matrix `kmat`.
BinaryMachine solve_binary(const MatrixXd& kmat, const std::vector<Index>& rows,
                           const std::vector<double>& y, double c) {
    const std::size_t n = rows.size();
    std::vector<double> alpha(n, 0.0), g(n, -1.0), qd(n);
    for (std::size_t i = 0; i < n; ++i) qd[i] = kmat(rows[i], rows[i]);
    auto q = [&](std::size_t i, std::size_t j) { return y[i] * y[j] * kmat(rows[i], rows[j]); };
    const double eps = 1e-3, tau = 1e-12;
    const long max_iter = std::max<long>(10000000L, 100L * static_cast<long>(n));
    auto upper = [&](std::size_t t) { return alpha[t] >= c; };
    auto lower = [&](std::size_t t) { return alpha[t] <= 0.0; };

    for (long iter = 0; iter < max_iter; ++iter) {
        double gmax = -std::numeric_limits<double>::infinity();
        std::ptrdiff_t i = -1;
        for (std::size_t t = 0; t < n; ++t) {
            if (y[t] > 0) {
                if (!upper(t) && -g[t] >= gmax) { gmax = -g[t]; i = static_cast<std::ptrdiff_t>(t); }
            } else {
                if (!lower(t) && g[t] >= gmax) { gmax = g[t]; i = static_cast<std::ptrdiff_t>(t); }
            }
        }
        if (i < 0) break;
        const auto ii = static_cast<std::size_t>(i);
        double gmax2 = -std::numeric_limits<double>::infinity();
        double obj_min = std::numeric_limits<double>::infinity();
        std::ptrdiff_t j = -1;
        for (std::size_t t = 0; t < n; ++t) {
            if (y[t] > 0) {
                if (lower(t)) continue;
                const double diff = gmax + g[t];
                gmax2 = std::max(gmax2, g[t]);
                if (diff > 0) {
                    const double quad = qd[ii] + qd[t] - 2.0 * y[ii] * q(ii, t);
                    const double obj = -diff * diff / std::max(quad, tau);
                    if (obj <= obj_min) { obj_min = obj; j = static_cast<std::ptrdiff_t>(t); }
                }
            } else {
                if (upper(t)) continue;
                const double diff = gmax - g[t];
                gmax2 = std::max(gmax2, -g[t]);
                if (diff > 0) {
                    const double quad = qd[ii] + qd[t] + 2.0 * y[ii] * q(ii, t);
                    const double obj = -diff * diff / std::max(quad, tau);
                    if (obj <= obj_min) { obj_min = obj; j = static_cast<std::ptrdiff_t>(t); }
                }
            }
        }
        if (gmax + gmax2 < eps || j < 0) break;
        const auto jj = static_cast<std::size_t>(j);

        const double ai_old = alpha[ii], aj_old = alpha[jj];
        double& ai = alpha[ii];
        double& aj = alpha[jj];
        if (y[ii] != y[jj]) {
            const double quad = std::max(qd[ii] + qd[jj] + 2.0 * q(ii, jj), tau);
            const double delta = (-g[ii] - g[jj]) / quad;
            const double diff = ai - aj;
            ai += delta;
            aj += delta;
            if (diff > 0) {
                if (aj < 0) { aj = 0; ai = diff; }
            } else {
                if (ai < 0) { ai = 0; aj = -diff; }
            }
            if (diff > 0) {
                if (ai > c) { ai = c; aj = c - diff; }
            } else {
                if (aj > c) { aj = c; ai = c + diff; }
            }
        } else {
            const double quad = std::max(qd[ii] + qd[jj] - 2.0 * q(ii, jj), tau);
            const double delta = (g[ii] - g[jj]) / quad;
            const double sum = ai + aj;
            ai -= delta;
            aj += delta;
            if (sum > c) {
                if (ai > c) { ai = c; aj = sum - c; }
            } else {
                if (aj < 0) { aj = 0; ai = sum; }
            }
            if (sum > c) {
                if (aj > c) { aj = c; ai = sum - c; }
            } else {
                if (ai < 0) { ai = 0; aj = sum; }
            }
        }
        const double dai = ai - ai_old, daj = aj - aj_old;
        for (std::size_t t = 0; t < n; ++t) g[t] += q(ii, t) * dai + q(jj, t) * daj;
    }

    double ub = std::numeric_limits<double>::infinity(), lb = -ub, sum = 0.0;
    int n_free = 0;
    for (std::size_t t = 0; t < n; ++t) {
        const double yg = y[t] * g[t];
        if (upper(t)) {
            if (y[t] < 0) ub = std::min(ub, yg); else lb = std::max(lb, yg);
        } else if (lower(t)) {
            if (y[t] > 0) ub = std::min(ub, yg); else lb = std::max(lb, yg);
        } else {
            ++n_free;
            sum += yg;
        }
    }
    BinaryMachine m;
    m.rho = n_free > 0 ? sum / n_free : (ub + lb) / 2.0;
    for (std::size_t t = 0; t < n; ++t) {
        if (alpha[t] > 0.0) {
            m.sv.push_back(static_cast<int>(rows[t]));
            m.coef.push_back(alpha[t] * y[t]);
        }
    }
    return m;
}

class Svm final : public Learner {
public:
    Svm(SvmParams p, MatrixXd sv, std::vector<BinaryMachine> machines)
        : p_(p), sv_(std::move(sv)), machines_(std::move(machines)) {}

    static std::shared_ptr<Svm> fit(const SvmParams& p, const MatrixXd& z, std::span<const int> y) {
        const MatrixXd kmat = kernel_matrix(p.kernel, z, z);
        const auto counts = class_counts(y);
        std::vector<BinaryMachine> machines;
        auto run = [&](int pos, int neg) {
            std::vector<Index> rows;
            std::vector<double> sign;
            for (std::size_t i = 0; i < y.size(); ++i) {
                if (y[i] == pos) {
                    rows.push_back(static_cast<Index>(i));
                    sign.push_back(1.0);
                } else if (neg < 0 || y[i] == neg) {
                    rows.push_back(static_cast<Index>(i));
                    sign.push_back(-1.0);
                }
            }
            BinaryMachine m = solve_binary(kmat, rows, sign, p.box_constraint);
            m.positive = pos;
            m.negative = neg;
            machines.push_back(std::move(m));
        };
        for (int a = 0; a < K; ++a) {
            if (counts[static_cast<std::size_t>(a)] == 0) continue;
            if (p.scheme == SvmScheme::one_vs_all) {
                run(a, -1);
                continue;
            }
            for (int b = a + 1; b < K; ++b) {
                if (counts[static_cast<std::size_t>(b)] > 0) run(a, b);
            }
        }
        // Compact the support vectors into one matrix shared by all machines.
        std::vector<int> remap(static_cast<std::size_t>(z.rows()), -1);
        std::vector<Index> keep;
        for (auto& m : machines) {
            for (int& r : m.sv) {
                auto& slot = remap[static_cast<std::size_t>(r)];
                if (slot < 0) {
                    slot = static_cast<int>(keep.size());
                    keep.push_back(r);
                }
                r = slot;
            }
        }
        MatrixXd sv(static_cast<Index>(keep.size()), z.cols());
        for (std::size_t i = 0; i < keep.size(); ++i) sv.row(static_cast<Index>(i)) = z.row(keep[i]);
        return std::make_shared<Svm>(p, std::move(sv), std::move(machines));
    }

    MatrixXd decision(const MatrixXd& z) const {
        const MatrixXd kx = sv_.rows() > 0 ? kernel_matrix(p_.kernel, z, sv_) : MatrixXd(z.rows(), 0);
        MatrixXd f(z.rows(), static_cast<Index>(machines_.size()));
        for (std::size_t m = 0; m < machines_.size(); ++m) {
            const auto& mc = machines_[m];
            for (Index i = 0; i < z.rows(); ++i) {
                double s = -mc.rho;
                for (std::size_t k = 0; k < mc.sv.size(); ++k) s += mc.coef[k] * kx(i, mc.sv[k]);
                f(i, static_cast<Index>(m)) = s;
            }
        }
        return f;
    }

    MatrixXd proba(const MatrixXd& z) const override {
        const MatrixXd f = decision(z);
        MatrixXd p = MatrixXd::Zero(z.rows(), K);
        for (Index i = 0; i < z.rows(); ++i) {
            if (p_.scheme == SvmScheme::one_vs_one) {
                for (std::size_t m = 0; m < machines_.size(); ++m) {
                    const auto& mc = machines_[m];
                    p(i, f(i, static_cast<Index>(m)) > 0.0 ? mc.positive : mc.negative) += 1.0;
                }
                p.row(i) /= static_cast<double>(machines_.size());
                continue;
            }
            double total = 0.0;
            std::size_t best = 0;
            for (std::size_t m = 0; m < machines_.size(); ++m) {
                const double v = f(i, static_cast<Index>(m));
                if (v > f(i, static_cast<Index>(best))) best = m;
                if (v > 0.0) {
                    p(i, machines_[m].positive) = v;
                    total += v;
                }
            }
            if (total > 0.0) {
                p.row(i) /= total;
            } else {
                p(i, machines_[best].positive) = 1.0;
            }
        }
        return p;
    }

    json params() const override {
        json machines = json::array();
        for (const auto& m : machines_) {
            machines.push_back({{"positive", m.positive},
                                {"negative", m.negative},
                                {"rho", m.rho},
                                {"sv", m.sv},
                                {"coef", m.coef}});
        }
        json sv = json::array();
        for (Index i = 0; i < sv_.rows(); ++i) {
            sv.push_back(std::vector<double>(sv_.row(i).begin(), sv_.row(i).end()));
        }
        return {{"type", "svm"}, {"support_vectors", sv}, {"machines", machines}};
    }

    static std::shared_ptr<Svm> from(const json& j, const SvmParams& p, Index d) {
        const auto& svj = j.at("support_vectors");
        MatrixXd sv(static_cast<Index>(svj.size()), d);
        for (std::size_t i = 0; i < svj.size(); ++i) {
            const auto row = svj[i].get<std::vector<double>>();
            if (static_cast<Index>(row.size()) != d) throw std::runtime_error("svm: feature count mismatch");
            sv.row(static_cast<Index>(i)) = Eigen::Map<const Eigen::RowVectorXd>(row.data(), d);
        }
        std::vector<BinaryMachine> machines;
        for (const auto& mj : j.at("machines")) {
            BinaryMachine m;
            m.positive = mj.at("positive").get<int>();
            m.negative = mj.at("negative").get<int>();
            m.rho = mj.at("rho").get<double>();
            m.sv = mj.at("sv").get<std::vector<int>>();
            m.coef = mj.at("coef").get<std::vector<double>>();
            if (m.sv.size() != m.coef.size() || m.positive < 0 || m.positive >= K || m.negative >= K) {
                throw std::runtime_error("svm: malformed machine");
            }
            for (int r : m.sv) {
                if (r < 0 || r >= sv.rows()) throw std::runtime_error("svm: support vector index out of range");
            }
            machines.push_back(std::move(m));
        }
        if (machines.empty()) throw std::runtime_error("svm: no machines");
        return std::make_shared<Svm>(p, std::move(sv), std::move(machines));
    }

private:
    SvmParams p_;
    MatrixXd sv_;
    std::vector<BinaryMachine> machines_;
};

constexpr int kTreeMinParent = 10;
constexpr int kBaggedMinParent = 2;

std::shared_ptr<const Learner> learner_from_json(const ClassicalConfig& cfg, const json& j, Index d) {
    const std::string type = j.at("type").get<std::string>();
    if (type != to_string(cfg.kind)) throw std::runtime_error("params.json does not match config kind");
    switch (cfg.kind) {
        case ClassicalKind::naive_bayes: return NaiveBayes::from(j, d);
        case ClassicalKind::decision_tree:
            return std::make_shared<TreeLearner>(Tree::from_json(j.at("nodes"), d));
        case ClassicalKind::svm: return Svm::from(j, *cfg.svm, d);
        case ClassicalKind::bagged_tree_ensemble: {
            std::vector<Tree> trees;
            for (const auto& t : j.at("trees")) trees.push_back(Tree::from_json(t, d));
            if (trees.empty()) throw std::runtime_error("bagged_tree_ensemble: no trees");
            return std::make_shared<BaggedTrees>(std::move(trees));
        }
    }
    throw ContractError("invalid ClassicalKind");
}

json read_json(const fs::path& p) {
    std::ifstream in(p);
    if (!in) throw std::runtime_error("missing model artifact " + p.string());
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw std::runtime_error(p.string() + ": " + e.what());
    }
}

}  // namespace

// ---------------------------------------------------------------- model

ClassicalModel::ClassicalModel(ClassicalConfig config, VectorXd mean, VectorXd scale,
                               std::shared_ptr<const detail::Learner> learner)
    : config_(std::move(config)), mean_(std::move(mean)), scale_(std::move(scale)), learner_(std::move(learner)) {
    config_.validate();
    if (mean_.size() != scale_.size() || !learner_) throw std::invalid_argument("ClassicalModel: bad state");
}

Eigen::MatrixXd ClassicalModel::predict_proba(const MatrixXd& features) const {
    if (features.cols() != mean_.size()) {
        throw ContractError("classical model expects " + std::to_string(mean_.size()) + " features, got " +
                            std::to_string(features.cols()));
    }
    MatrixXd z(features.rows(), features.cols());
    for (Index f = 0; f < features.cols(); ++f) {
        if (scale_[f] > 0.0) {
            z.col(f) = (features.col(f).array() - mean_[f]) / scale_[f];
        } else {
            z.col(f).setZero();
        }
    }
    return learner_->proba(z);
}

std::vector<int> ClassicalModel::predict(const MatrixXd& features) const {
    const MatrixXd p = predict_proba(features);
    std::vector<int> out(static_cast<std::size_t>(p.rows()));
    for (Index i = 0; i < p.rows(); ++i) {
        int best = 0;
        for (int c = 1; c < K; ++c) {
            if (p(i, c) > p(i, best)) best = c;
        }
        out[static_cast<std::size_t>(i)] = best;
    }
    return out;
}

void ClassicalModel::save(const fs::path& dir) const {
    fs::create_directories(dir);
    {
        std::ofstream out(dir / "config.json");
        out << json(config_).dump(2) << '\n';
        if (!out) throw std::runtime_error("cannot write " + (dir / "config.json").string());
    }
    json params{{"mean", std::vector<double>(mean_.begin(), mean_.end())},
                {"scale", std::vector<double>(scale_.begin(), scale_.end())},
                {"learner", learner_->params()}};
    std::ofstream out(dir / "params.json");
    out << params.dump() << '\n';
    if (!out) throw std::runtime_error("cannot write " + (dir / "params.json").string());
}

ClassicalModel ClassicalModel::load(const fs::path& dir) {
    const ClassicalConfig cfg = read_json(dir / "config.json").get<ClassicalConfig>();
    const json params = read_json(dir / "params.json");
    const auto mean = params.at("mean").get<std::vector<double>>();
    const auto scale = params.at("scale").get<std::vector<double>>();
    if (mean.size() != scale.size()) throw std::runtime_error("params.json: mean/scale length mismatch");
    const auto d = static_cast<Index>(mean.size());
    return ClassicalModel(cfg, Eigen::Map<const VectorXd>(mean.data(), d),
                          Eigen::Map<const VectorXd>(scale.data(), d),
                          learner_from_json(cfg, params.at("learner"), d));
}

ClassicalModel train_classical(const ClassicalConfig& config, const MatrixXd& features,
                               std::span<const int> labels) {
    config.validate();
    if (static_cast<std::size_t>(features.rows()) != labels.size()) {
        throw std::invalid_argument("train_classical: feature and label counts differ");
    }
    if (!features.allFinite()) throw std::invalid_argument("train_classical: non-finite feature value");
    for (int v : labels) {
        if (v < 0 || v >= K) throw std::invalid_argument("train_classical: label outside 0-7");
    }
    int present = 0;
    for (int c : class_counts(labels)) present += c > 0 ? 1 : 0;
    if (present < 2) throw std::invalid_argument("train_classical: need at least two classes");

    const Index d = features.cols();
    VectorXd mean = features.colwise().mean().transpose();
    VectorXd scale(d);
    for (Index f = 0; f < d; ++f) {
        scale[f] = std::sqrt((features.col(f).array() - mean[f]).square().mean());
    }
    MatrixXd z(features.rows(), d);
    for (Index f = 0; f < d; ++f) {
        if (scale[f] > 0.0) {
            z.col(f) = (features.col(f).array() - mean[f]) / scale[f];
        } else {
            z.col(f).setZero();
        }
    }

    std::shared_ptr<const Learner> learner;
    std::vector<Index> all(static_cast<std::size_t>(z.rows()));
    std::iota(all.begin(), all.end(), Index{0});
    switch (config.kind) {
        case ClassicalKind::naive_bayes: learner = std::make_shared<NaiveBayes>(z, labels); break;
        case ClassicalKind::decision_tree:
            learner = std::make_shared<TreeLearner>(
                Tree(z, labels, all, config.tree->split_criterion, kTreeMinParent));
            break;
        case ClassicalKind::svm: learner = Svm::fit(*config.svm, z, labels); break;
        case ClassicalKind::bagged_tree_ensemble: {
            std::seed_seq seq{static_cast<std::uint32_t>(config.seed),
                              static_cast<std::uint32_t>(config.seed >> 32), 0xB7Eu};
            std::mt19937_64 rng(seq);
            std::uniform_int_distribution<Index> pick(0, z.rows() - 1);
            std::vector<Tree> trees;
            for (int t = 0; t < config.ensemble->n_trees; ++t) {
                std::vector<Index> rows(static_cast<std::size_t>(z.rows()));
                for (auto& r : rows) r = pick(rng);
                std::sort(rows.begin(), rows.end());
                trees.emplace_back(z, labels, std::move(rows), SplitCriterion::max_deviance_reduction,
                                   kBaggedMinParent);
            }
            learner = std::make_shared<BaggedTrees>(std::move(trees));
            break;
        }
    }
    return ClassicalModel(config, std::move(mean), std::move(scale), std::move(learner));
}

}  // namespace runstyle
