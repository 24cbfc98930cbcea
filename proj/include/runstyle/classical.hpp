#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"
#include "runstyle/domain.hpp"

namespace runstyle {

enum class ClassicalKind { naive_bayes, decision_tree, svm, bagged_tree_ensemble };
enum class SvmKernel { cubic_polynomial, gaussian };
enum class SvmScheme { one_vs_one, one_vs_all };
enum class SplitCriterion { max_deviance_reduction, twoing };

std::string_view to_string(ClassicalKind k);
std::string_view to_string(SvmKernel k);
std::string_view to_string(SvmScheme s);
std::string_view to_string(SplitCriterion c);
ClassicalKind parse_classical_kind(const std::string& s);

struct SvmParams {
    SvmKernel kernel = SvmKernel::cubic_polynomial;
    SvmScheme scheme = SvmScheme::one_vs_one;
    double box_constraint = 1.0;
};

struct TreeParams {
    SplitCriterion split_criterion = SplitCriterion::max_deviance_reduction;
};

struct EnsembleParams {
    int n_trees = 100;
};

struct ClassicalConfig {
    ClassicalKind kind = ClassicalKind::naive_bayes;
    SensorLocation sensor = SensorLocation::com;
    std::optional<SvmParams> svm;
    std::optional<TreeParams> tree;
    std::optional<EnsembleParams> ensemble;
    std::uint64_t seed = 0;

    /// Throws std::invalid_argument unless exactly the fields of `kind` are set.
    void validate() const;
};

void to_json(nlohmann::json& j, const ClassicalConfig& c);
void from_json(const nlohmann::json& j, ClassicalConfig& c);

ClassicalConfig default_config(ClassicalKind kind, SensorLocation sensor);

namespace detail {
class Learner;
}

/// A fitted baseline. Inputs are raw feature rows; the stored training
/// statistics standardize them before they reach the learner.
class ClassicalModel {
public:
    ClassicalModel(ClassicalConfig config, Eigen::VectorXd mean, Eigen::VectorXd scale,
                   std::shared_ptr<const detail::Learner> learner);

    const ClassicalConfig& config() const { return config_; }
    int n_features() const { return static_cast<int>(mean_.size()); }

    /// Rows on the 8-class simplex.
    Eigen::MatrixXd predict_proba(const Eigen::MatrixXd& features) const;
    std::vector<int> predict(const Eigen::MatrixXd& features) const;

    /// Writes config.json and params.json.
    void save(const std::filesystem::path& dir) const;
    static ClassicalModel load(const std::filesystem::path& dir);

private:
    ClassicalConfig config_;
    Eigen::VectorXd mean_, scale_;
    std::shared_ptr<const detail::Learner> learner_;
};

ClassicalModel train_classical(const ClassicalConfig& config, const Eigen::MatrixXd& features,
                               std::span<const int> labels);

}  // namespace runstyle
