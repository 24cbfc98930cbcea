#pragma once

// Minimal layer toolkit for the sequence classifiers. Activations are stored
// row-major as (n_sequences * length) x channels, so reshaping a batch of
// sequences into a longer list of shorter sequences is free.

#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace runstyle::nn {

template <typename T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename T>
struct Param {
    std::string name;
    Mat<T> value;
    Mat<T> grad;

    void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

template <typename T>
using ParamList = std::vector<Param<T>*>;

/// Glorot-uniform fill, matching the usual dense/conv kernel initializer.
template <typename T>
void glorot_uniform(Mat<T>& w, double fan_in, double fan_out, std::mt19937_64& rng);

/// 1-D convolution, "same" zero padding, odd kernel, stride 1, with an
/// optional fused rectifier. Kernel is stored as (kernel * in) x out, tap-major.
template <typename T>
class Conv1d {
public:
    Conv1d(int in_channels, int out_channels, int kernel, std::string name, bool relu = false);

    void init(std::mt19937_64& rng);
    Mat<T> forward(const Mat<T>& x, int length);
    /// Returns d(loss)/d(input), or an empty matrix when input gradients are off.
    Mat<T> backward(const Mat<T>& dy);
    ParamList<T> params() { return {&weight_, &bias_}; }
    void set_input_grad(bool on) { input_grad_ = on; }

    int in_channels() const { return in_; }
    int out_channels() const { return out_; }
    int kernel() const { return kernel_; }
    const Param<T>& weight() const { return weight_; }

private:
    int in_, out_, kernel_;
    bool relu_;
    bool input_grad_ = true;
    Param<T> weight_, bias_;
    Mat<T> col_;
    Mat<T> output_;  // kept for the rectifier mask
    int length_ = 0;
};

template <typename T>
class Relu {
public:
    Mat<T> forward(const Mat<T>& x);
    Mat<T> backward(const Mat<T>& dy) const;

private:
    Mat<T> mask_;
};

/// Non-overlapping max pooling over time; a trailing partial window is dropped.
template <typename T>
class MaxPool1d {
public:
    explicit MaxPool1d(int pool) : pool_(pool) {}

    Mat<T> forward(const Mat<T>& x, int length);
    Mat<T> backward(const Mat<T>& dy) const;
    int output_length(int length) const { return length / pool_; }

private:
    int pool_;
    std::vector<Eigen::Index> argmax_;
    Eigen::Index in_rows_ = 0;
};

/// Non-overlapping average pooling over time; a trailing partial window is
/// kept and averaged over the samples it has.
template <typename T>
class MeanPool1d {
public:
    explicit MeanPool1d(int window) : window_(window) {}

    Mat<T> forward(const Mat<T>& x, int length);
    Mat<T> backward(const Mat<T>& dy) const;
    int output_length(int length) const { return (length + window_ - 1) / window_; }

private:
    int window_;
    int length_ = 0;
    Eigen::Index in_rows_ = 0;
};

template <typename T>
class Dense {
public:
    Dense(int in, int out, std::string name);

    void init(std::mt19937_64& rng);
    Mat<T> forward(const Mat<T>& x);
    Mat<T> backward(const Mat<T>& dy);
    ParamList<T> params() { return {&weight_, &bias_}; }

    int in_features() const { return static_cast<int>(weight_.value.rows()); }
    int out_features() const { return static_cast<int>(weight_.value.cols()); }

private:
    Param<T> weight_, bias_;
    Mat<T> input_;
};

/// Single-direction LSTM with i, f, g, o gate layout. Input rows are
/// (sequence, step) pairs; output has the same row layout with `hidden` cols.
template <typename T>
class Lstm {
public:
    Lstm(int in, int hidden, bool reverse, std::string name);

    void init(std::mt19937_64& rng);
    Mat<T> forward(const Mat<T>& x, int length);
    Mat<T> backward(const Mat<T>& dh);
    ParamList<T> params() { return {&w_input_, &w_hidden_, &bias_}; }
    int hidden() const { return hidden_; }

private:
    int in_, hidden_;
    bool reverse_;
    Param<T> w_input_, w_hidden_, bias_;
    // Per-step caches, indexed by processing order.
    Mat<T> input_;
    std::vector<Mat<T>> gates_;  // activated i, f, g, o  (batch x 4H)
    std::vector<Mat<T>> cell_;
    std::vector<Mat<T>> hidden_state_;
    int length_ = 0;
    Eigen::Index batch_ = 0;
};

/// Forward and backward LSTM side by side. With `return_sequences` false the
/// output is each direction's final state: forward at the last step,
/// backward at the first.
template <typename T>
class BiLstm {
public:
    BiLstm(int in, int hidden, bool return_sequences, std::string name);

    void init(std::mt19937_64& rng);
    Mat<T> forward(const Mat<T>& x, int length);
    Mat<T> backward(const Mat<T>& dy);
    ParamList<T> params();
    int output_features() const { return 2 * fwd_.hidden(); }

private:
    Lstm<T> fwd_, bwd_;
    bool return_sequences_;
    int length_ = 0;
    Eigen::Index batch_ = 0;
};

/// Row-wise softmax.
template <typename T>
Mat<T> softmax(const Mat<T>& logits);

/// Mean categorical cross-entropy; writes d(loss)/d(logits) into `grad`.
template <typename T>
double cross_entropy(const Mat<T>& logits, const std::vector<int>& labels, Mat<T>& grad);

/// Adam with Keras defaults (beta1 0.9, beta2 0.999, eps 1e-7).
template <typename T>
class Adam {
public:
    explicit Adam(double learning_rate, double beta1 = 0.9, double beta2 = 0.999,
                  double epsilon = 1e-7)
        : lr_(learning_rate), beta1_(beta1), beta2_(beta2), eps_(epsilon) {}

    void step(const ParamList<T>& params);

private:
    double lr_, beta1_, beta2_, eps_;
    long t_ = 0;
    std::vector<Mat<T>> m_, v_;
};

}  // namespace runstyle::nn
