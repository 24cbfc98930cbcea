#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>
#include "json.hpp"

#include "runstyle/model_spec.hpp"
#include "runstyle/nn/networks.hpp"
#include "runstyle/windowing.hpp"

namespace runstyle {

using DeepSpec = std::variant<CnnLstmSpec, CnnSpec>;

struct TrainConfig {
    int epochs = 300;
    int batch_size = 64;
    double learning_rate = 0.0002;
    std::uint64_t seed = 0;
    /// Stop after this many epochs without a validation-loss improvement.
    std::optional<int> patience;

    /// 30 epochs with early stopping.
    static TrainConfig desk();
    void validate() const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

/// Per-channel z-score statistics, computed from training data.
struct NormStats {
    std::array<double, 3> mean{0.0, 0.0, 0.0};
    std::array<double, 3> std{1.0, 1.0, 1.0};
};

struct EpochRecord {
    int epoch = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
    double val_accuracy = 0.0;
};

std::unique_ptr<nn::Network<float>> build_cnn_lstm(const CnnLstmSpec& spec, std::uint64_t seed);
std::unique_ptr<nn::Network<float>> build_cnn(const CnnSpec& spec, std::uint64_t seed);
std::unique_ptr<nn::Network<float>> build_network(const DeepSpec& spec, std::uint64_t seed);

class TrainedModel {
public:
    TrainedModel(DeepSpec spec, std::unique_ptr<nn::Network<float>> net, NormStats norm);

    TrainedModel(const TrainedModel& other);
    TrainedModel& operator=(const TrainedModel& other);
    TrainedModel(TrainedModel&&) noexcept = default;
    TrainedModel& operator=(TrainedModel&&) noexcept = default;

    const DeepSpec& spec() const { return spec_; }
    std::string family() const;
    const NormStats& norm() const { return norm_; }
    const std::vector<EpochRecord>& history() const { return history_; }
    std::vector<EpochRecord>& history() { return history_; }
    int best_epoch() const { return best_epoch_; }
    void set_best_epoch(int e) { best_epoch_ = e; }
    nn::Network<float>& network() { return *net_; }

    /// One row of 8 class probabilities per segment.
    Eigen::MatrixXd predict_proba(std::span<const Segment> segments) const;
    Eigen::VectorXd predict_proba(const Segment& segment) const;

    /// Writes spec.json, norm.json, params.bin and history.json.
    void save(const std::filesystem::path& dir) const;
    static TrainedModel load(const std::filesystem::path& dir);

private:
    DeepSpec spec_;
    std::unique_ptr<nn::Network<float>> net_;
    NormStats norm_;
    std::vector<EpochRecord> history_;
    int best_epoch_ = 0;
};

/// Trains a fresh network. The parameters of the epoch with the lowest
/// validation loss are kept; with an empty validation set, the last epoch's.
TrainedModel train(const DeepSpec& spec, std::span<const Segment> train_x,
                   std::span<const int> train_y, std::span<const Segment> val_x,
                   std::span<const int> val_y, const TrainConfig& cfg);

/// Continues training a copy of `model` with its stored normalization and a
/// fresh optimizer.
TrainedModel continue_training(const TrainedModel& model, std::span<const Segment> train_x,
                               std::span<const int> train_y, std::span<const Segment> val_x,
                               std::span<const int> val_y, const TrainConfig& cfg);

/// Element-wise mean of exactly five probability vectors.
Eigen::VectorXd fuse_scores(std::span<const Eigen::VectorXd> probs);

/// Index of the largest entry; ties go to the lowest index.
int argmax(const Eigen::VectorXd& p);

}  // namespace runstyle
