#include "runstyle/nn/networks.hpp"

#include <stdexcept>

namespace runstyle::nn {

using Eigen::Index;

namespace {

template <typename T>
Mat<T> reshape(const Mat<T>& m, Index rows, Index cols) {
    if (rows * cols != m.size()) throw std::logic_error("reshape: size mismatch");
    return Eigen::Map<const Mat<T>>(m.data(), rows, cols);
}

// Mean of each run of `d` consecutive rows.
template <typename T>
Mat<T> average_rows(const Mat<T>& x, int d) {
    if (d == 1) return x;
    const Index channels = x.cols();
    Mat<T> y = Mat<T>::Zero(x.rows() / d, channels);
    const T scale = T(1) / static_cast<T>(d);
    const T* src = x.data();
    for (Index r = 0; r < y.rows(); ++r) {
        T* out = y.data() + r * channels;
        for (int k = 0; k < d; ++k, src += channels) {
            for (Index c = 0; c < channels; ++c) out[c] += src[c];
        }
        for (Index c = 0; c < channels; ++c) out[c] *= scale;
    }
    return y;
}

}  // namespace

template <typename T>
Mat<T> Network<T>::stem(const Mat<T>& x) const {
    if (x.cols() != input_channels() || x.rows() % input_samples() != 0) {
        throw std::invalid_argument("Network: expected " + std::to_string(input_samples()) + " x " +
                                    std::to_string(input_channels()) + " samples per segment");
    }
    return average_rows(x, decimation());
}

template <typename T>
Mat<T> Network<T>::forward(const Mat<T>& x, int batch) {
    if (x.rows() != static_cast<Index>(batch) * input_samples()) {
        throw std::invalid_argument("Network: expected " + std::to_string(input_samples()) +
                                    " samples per segment");
    }
    return forward_stemmed(stem(x), batch);
}

template <typename T>
std::size_t Network<T>::parameter_count() {
    std::size_t n = 0;
    for (const auto* p : params()) n += static_cast<std::size_t>(p->value.size());
    return n;
}

template <typename T>
void Network<T>::zero_grad() {
    for (auto* p : params()) p->zero_grad();
}

// ------------------------------------------------------------ CnnLstmNet

template <typename T>
CnnLstmNet<T>::CnnLstmNet(const CnnLstmSpec& spec, std::uint64_t seed)
    : spec_((spec.validate(), spec)), reduce_(spec.reduce_factor) {
    int in = spec_.channels;
    for (std::size_t b = 0; b < spec_.conv_blocks.size(); ++b) {
        for (std::size_t k = 0; k < spec_.conv_blocks[b].size(); ++k) {
            const int f = spec_.conv_blocks[b][k];
            convs_.emplace_back(in, f, spec_.kernel,
                                "conv" + std::to_string(b + 1) + "_" + std::to_string(k + 1), true);
            block_of_conv_.push_back(static_cast<int>(b));
            in = f;
        }
    }
    convs_.front().set_input_grad(false);
    const std::size_t n_pools =
        spec_.pooling == PoolingMode::per_block ? spec_.conv_blocks.size() : 1;
    for (std::size_t p = 0; p < n_pools; ++p) pools_.emplace_back(spec_.pool_size);

    in = spec_.embedding_size();
    for (int l = 0; l < spec_.lstm_layers; ++l) {
        lstms_.emplace_back(in, spec_.lstm_hidden, l + 1 < spec_.lstm_layers,
                            "blstm" + std::to_string(l + 1));
        in = lstms_.back().output_features();
    }
    for (std::size_t h = 0; h < spec_.head.size(); ++h) {
        head_.emplace_back(in, spec_.head[h], "fc" + std::to_string(h + 1));
        in = spec_.head[h];
    }
    head_relus_.resize(spec_.head.size());
    head_.emplace_back(in, spec_.classes, "output");

    std::mt19937_64 rng(seed);
    for (auto& c : convs_) c.init(rng);
    for (auto& l : lstms_) l.init(rng);
    for (auto& d : head_) d.init(rng);
}

template <typename T>
ParamList<T> CnnLstmNet<T>::params() {
    ParamList<T> out;
    auto add = [&](ParamList<T> p) { out.insert(out.end(), p.begin(), p.end()); };
    for (auto& c : convs_) add(c.params());
    for (auto& l : lstms_) add(l.params());
    for (auto& d : head_) add(d.params());
    return out;
}

template <typename T>
Mat<T> CnnLstmNet<T>::cnn_forward(const Mat<T>& h_in, int count) {
    int len = spec_.subsegment_length() / spec_.decimation;
    if (h_in.rows() != static_cast<Index>(count) * len || h_in.cols() != spec_.channels) {
        throw std::invalid_argument("CnnLstmNet: sub-segment batch has wrong shape");
    }
    Mat<T> h = h_in;
    std::size_t pool = 0;
    for (std::size_t i = 0; i < convs_.size(); ++i) {
        h = convs_[i].forward(h, len);
        const bool block_end = i + 1 == convs_.size() || block_of_conv_[i + 1] != block_of_conv_[i];
        const bool pool_here = block_end && (spec_.pooling == PoolingMode::per_block ||
                                             i + 1 == convs_.size());
        if (pool_here) {
            h = pools_[pool++].forward(h, len);
            len /= spec_.pool_size;
        }
    }
    h = reduce_.forward(h, len);
    return reshape(h, count, spec_.embedding_size());
}

template <typename T>
void CnnLstmNet<T>::cnn_backward(const Mat<T>& dy) {
    const Index count = dy.rows();
    const int channels = static_cast<int>(convs_.back().out_channels());
    Mat<T> g = reshape(dy, count * spec_.cnn_output_length(), channels);
    g = reduce_.backward(g);
    std::size_t pool = pools_.size();
    for (std::size_t i = convs_.size(); i-- > 0;) {
        const bool block_end = i + 1 == convs_.size() || block_of_conv_[i + 1] != block_of_conv_[i];
        const bool pool_here = block_end && (spec_.pooling == PoolingMode::per_block ||
                                             i + 1 == convs_.size());
        if (pool_here) g = pools_[--pool].backward(g);
        g = convs_[i].backward(g);
    }
}

template <typename T>
Mat<T> CnnLstmNet<T>::embed(const Mat<T>& subsegments, int count) {
    if (subsegments.rows() != static_cast<Index>(count) * spec_.subsegment_length() ||
        subsegments.cols() != spec_.channels) {
        throw std::invalid_argument("CnnLstmNet: sub-segment batch has wrong shape");
    }
    return cnn_forward(average_rows(subsegments, spec_.decimation), count);
}

template <typename T>
Mat<T> CnnLstmNet<T>::forward_stemmed(const Mat<T>& h_in, int batch) {
    const Index per_segment = spec_.segment_samples / spec_.decimation;
    if (h_in.rows() != static_cast<Index>(batch) * per_segment) {
        throw std::invalid_argument("CnnLstmNet: stemmed batch has wrong shape");
    }
    // Rows (b, t) of the segment batch are rows (b * subsegments + k, tau)
    // of the sub-segment batch, so the split needs no copy.
    Mat<T> h = cnn_forward(h_in, batch * spec_.subsegments);
    for (auto& l : lstms_) h = l.forward(h, spec_.subsegments);
    for (std::size_t i = 0; i + 1 < head_.size(); ++i) {
        h = head_relus_[i].forward(head_[i].forward(h));
    }
    return head_.back().forward(h);
}

template <typename T>
void CnnLstmNet<T>::backward(const Mat<T>& dlogits) {
    Mat<T> g = head_.back().backward(dlogits);
    for (std::size_t i = head_.size() - 1; i-- > 0;) {
        g = head_[i].backward(head_relus_[i].backward(g));
    }
    for (std::size_t l = lstms_.size(); l-- > 0;) g = lstms_[l].backward(g);
    cnn_backward(g);
}

// ---------------------------------------------------------------- CnnNet

template <typename T>
CnnNet<T>::CnnNet(const CnnSpec& spec, std::uint64_t seed)
    : spec_((spec.validate(), spec)) {
    int in = spec_.channels;
    for (std::size_t b = 0; b < spec_.filters.size(); ++b) {
        convs_.emplace_back(in, spec_.filters[b], spec_.kernel, "conv" + std::to_string(b + 1), true);
        pools_.emplace_back(spec_.pool_size);
        in = spec_.filters[b];
    }
    convs_.front().set_input_grad(false);
    in = spec_.flatten_size();
    for (std::size_t h = 0; h < spec_.head.size(); ++h) {
        head_.emplace_back(in, spec_.head[h], "fc" + std::to_string(h + 1));
        in = spec_.head[h];
    }
    head_relus_.resize(spec_.head.size());
    head_.emplace_back(in, spec_.classes, "output");

    std::mt19937_64 rng(seed);
    for (auto& c : convs_) c.init(rng);
    for (auto& d : head_) d.init(rng);
}

template <typename T>
ParamList<T> CnnNet<T>::params() {
    ParamList<T> out;
    auto add = [&](ParamList<T> p) { out.insert(out.end(), p.begin(), p.end()); };
    for (auto& c : convs_) add(c.params());
    for (auto& d : head_) add(d.params());
    return out;
}

template <typename T>
Mat<T> CnnNet<T>::forward_stemmed(const Mat<T>& h_in, int batch) {
    int len = spec_.segment_samples / spec_.decimation;
    if (h_in.rows() != static_cast<Index>(batch) * len || h_in.cols() != spec_.channels) {
        throw std::invalid_argument("CnnNet: stemmed batch has wrong shape");
    }
    Mat<T> h = h_in;
    for (std::size_t i = 0; i < convs_.size(); ++i) {
        h = convs_[i].forward(h, len);
        h = pools_[i].forward(h, len);
        len /= spec_.pool_size;
    }
    h = reshape(h, batch, spec_.flatten_size());
    for (std::size_t i = 0; i + 1 < head_.size(); ++i) {
        h = head_relus_[i].forward(head_[i].forward(h));
    }
    return head_.back().forward(h);
}

template <typename T>
void CnnNet<T>::backward(const Mat<T>& dlogits) {
    Mat<T> g = head_.back().backward(dlogits);
    for (std::size_t i = head_.size() - 1; i-- > 0;) {
        g = head_[i].backward(head_relus_[i].backward(g));
    }
    const Index channels = convs_.back().out_channels();
    g = reshape(g, g.size() / channels, channels);
    for (std::size_t i = convs_.size(); i-- > 0;) {
        g = pools_[i].backward(g);
        g = convs_[i].backward(g);
    }
}

template class Network<float>;
template class Network<double>;
template class CnnLstmNet<float>;
template class CnnLstmNet<double>;
template class CnnNet<float>;
template class CnnNet<double>;

}  // namespace runstyle::nn
