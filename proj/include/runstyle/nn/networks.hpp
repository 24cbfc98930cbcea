#pragma once

#include <cstdint>
#include <memory>

#include "runstyle/model_spec.hpp"
#include "runstyle/nn/layers.hpp"

namespace runstyle::nn {

/// A classifier mapping a batch of segments, laid out as
/// (batch * segment_samples) x channels, to (batch x classes) logits.
///
/// The input first passes a parameter-free stem that averages each run of
/// `decimation()` samples. Callers that reuse inputs across epochs can apply
/// `stem` once and call `forward_stemmed` directly.
template <typename T>
class Network {
public:
    virtual ~Network() = default;

    Mat<T> forward(const Mat<T>& x, int batch);
    Mat<T> stem(const Mat<T>& x) const;
    virtual Mat<T> forward_stemmed(const Mat<T>& h, int batch) = 0;
    /// Back-propagates d(loss)/d(logits), accumulating parameter gradients.
    virtual void backward(const Mat<T>& dlogits) = 0;
    virtual ParamList<T> params() = 0;
    virtual int input_samples() const = 0;
    virtual int input_channels() const = 0;
    virtual int decimation() const = 0;
    virtual int classes() const = 0;

    std::size_t parameter_count();
    void zero_grad();
};

template <typename T>
class CnnLstmNet final : public Network<T> {
public:
    CnnLstmNet(const CnnLstmSpec& spec, std::uint64_t seed);

    Mat<T> forward_stemmed(const Mat<T>& h, int batch) override;
    void backward(const Mat<T>& dlogits) override;
    ParamList<T> params() override;
    int input_samples() const override { return spec_.segment_samples; }
    int input_channels() const override { return spec_.channels; }
    int decimation() const override { return spec_.decimation; }
    int classes() const override { return spec_.classes; }

    /// Runs the stem and the shared CNN on `count` raw sub-segments,
    /// returning one embedding row per sub-segment.
    Mat<T> embed(const Mat<T>& subsegments, int count);

    const CnnLstmSpec& spec() const { return spec_; }
    const Conv1d<T>& first_conv() const { return convs_.front(); }
    const Dense<T>& output_layer() const { return head_.back(); }

private:
    Mat<T> cnn_forward(const Mat<T>& h, int count);
    void cnn_backward(const Mat<T>& dy);

    CnnLstmSpec spec_;
    std::vector<Conv1d<T>> convs_;
    std::vector<MaxPool1d<T>> pools_;
    std::vector<int> block_of_conv_;
    MeanPool1d<T> reduce_;
    std::vector<BiLstm<T>> lstms_;
    std::vector<Dense<T>> head_;  // last entry is the class layer
    std::vector<Relu<T>> head_relus_;
};

template <typename T>
class CnnNet final : public Network<T> {
public:
    CnnNet(const CnnSpec& spec, std::uint64_t seed);

    Mat<T> forward_stemmed(const Mat<T>& h, int batch) override;
    void backward(const Mat<T>& dlogits) override;
    ParamList<T> params() override;
    int input_samples() const override { return spec_.segment_samples; }
    int input_channels() const override { return spec_.channels; }
    int decimation() const override { return spec_.decimation; }
    int classes() const override { return spec_.classes; }

    const CnnSpec& spec() const { return spec_; }
    const std::vector<Dense<T>>& head() const { return head_; }

private:
    CnnSpec spec_;
    std::vector<Conv1d<T>> convs_;
    std::vector<MaxPool1d<T>> pools_;
    std::vector<Dense<T>> head_;
    std::vector<Relu<T>> head_relus_;
};

}  // namespace runstyle::nn
