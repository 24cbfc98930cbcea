#include "runstyle/nn/layers.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace runstyle::nn {

using Eigen::Index;

template <typename T>
void glorot_uniform(Mat<T>& w, double fan_in, double fan_out, std::mt19937_64& rng) {
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-limit, limit);
    for (Index i = 0; i < w.size(); ++i) w.data()[i] = static_cast<T>(dist(rng));
}

// ---------------------------------------------------------------- Conv1d

template <typename T>
Conv1d<T>::Conv1d(int in_channels, int out_channels, int kernel, std::string name, bool relu)
    : in_(in_channels), out_(out_channels), kernel_(kernel), relu_(relu) {
    if (in_ < 1 || out_ < 1 || kernel_ < 1 || kernel_ % 2 == 0) {
        throw std::invalid_argument("Conv1d " + name + ": bad dimensions");
    }
    weight_ = {name + ".kernel", Mat<T>::Zero(kernel_ * in_, out_), {}};
    bias_ = {name + ".bias", Mat<T>::Zero(1, out_), {}};
    weight_.zero_grad();
    bias_.zero_grad();
}

template <typename T>
void Conv1d<T>::init(std::mt19937_64& rng) {
    glorot_uniform(weight_.value, kernel_ * in_, kernel_ * out_, rng);
    bias_.value.setZero();
}

template <typename T>
Mat<T> Conv1d<T>::forward(const Mat<T>& x, int length) {
    if (x.cols() != in_ || length < 1 || x.rows() % length != 0) {
        throw std::invalid_argument("Conv1d: input shape mismatch");
    }
    length_ = length;
    const Index rows = x.rows();
    const Index n_seq = rows / length;
    const int pad = kernel_ / 2;
    const Index width = static_cast<Index>(kernel_) * in_;

    // Row (s, t) of the patch matrix is input rows t-pad .. t+pad of
    // sequence s, which are contiguous in memory away from the edges.
    col_.resize(rows, width);
    for (Index s = 0; s < n_seq; ++s) {
        const T* seq = x.data() + s * length * in_;
        for (int t = 0; t < length; ++t) {
            T* dst = col_.data() + (s * length + t) * width;
            const int first = t - pad;
            const int last = t + pad;
            if (first >= 0 && last < length) {
                std::copy(seq + static_cast<Index>(first) * in_,
                          seq + static_cast<Index>(last + 1) * in_, dst);
                continue;
            }
            for (int j = 0; j < kernel_; ++j) {
                const int src = first + j;
                T* cell = dst + static_cast<Index>(j) * in_;
                if (src < 0 || src >= length) {
                    std::fill(cell, cell + in_, T(0));
                } else {
                    std::copy(seq + static_cast<Index>(src) * in_,
                              seq + static_cast<Index>(src + 1) * in_, cell);
                }
            }
        }
    }
    Mat<T> y(rows, out_);
    y.noalias() = col_ * weight_.value;
    y.rowwise() += bias_.value.row(0);
    if (relu_) {
        T* v = y.data();
        for (Index k = 0; k < y.size(); ++k) v[k] = v[k] > T(0) ? v[k] : T(0);
        output_ = y;
    }
    return y;
}

template <typename T>
Mat<T> Conv1d<T>::backward(const Mat<T>& dy_in) {
    Mat<T> masked;
    if (relu_) {
        masked.resize(dy_in.rows(), dy_in.cols());
        const T* out = output_.data();
        const T* g = dy_in.data();
        T* m = masked.data();
        for (Index k = 0; k < masked.size(); ++k) m[k] = out[k] > T(0) ? g[k] : T(0);
    }
    const Mat<T>& dy = relu_ ? masked : dy_in;

    weight_.grad.noalias() += col_.transpose() * dy;
    bias_.grad += dy.colwise().sum();
    if (!input_grad_) return {};

    Mat<T> dcol(dy.rows(), col_.cols());
    dcol.noalias() = dy * weight_.value.transpose();
    const Index rows = dy.rows();
    const Index n_seq = rows / length_;
    const int pad = kernel_ / 2;
    const Index width = static_cast<Index>(kernel_) * in_;
    Mat<T> dx = Mat<T>::Zero(rows, in_);
    for (Index s = 0; s < n_seq; ++s) {
        T* seq = dx.data() + s * length_ * in_;
        for (int t = 0; t < length_; ++t) {
            const T* g = dcol.data() + (s * length_ + t) * width;
            const int first = t - pad;
            if (first >= 0 && t + pad < length_) {
                T* dst = seq + static_cast<Index>(first) * in_;
                for (Index c = 0; c < width; ++c) dst[c] += g[c];
                continue;
            }
            for (int j = 0; j < kernel_; ++j) {
                const int src = first + j;
                if (src < 0 || src >= length_) continue;
                T* dst = seq + static_cast<Index>(src) * in_;
                const T* gj = g + static_cast<Index>(j) * in_;
                for (int c = 0; c < in_; ++c) dst[c] += gj[c];
            }
        }
    }
    return dx;
}

// ------------------------------------------------------------------ Relu

template <typename T>
Mat<T> Relu<T>::forward(const Mat<T>& x) {
    mask_ = (x.array() > T(0)).template cast<T>();
    return x.cwiseMax(T(0));
}

template <typename T>
Mat<T> Relu<T>::backward(const Mat<T>& dy) const {
    return dy.cwiseProduct(mask_);
}

// ------------------------------------------------------------- MaxPool1d

template <typename T>
Mat<T> MaxPool1d<T>::forward(const Mat<T>& x, int length) {
    const Index channels = x.cols();
    const Index n_seq = x.rows() / length;
    const int out_len = output_length(length);
    if (out_len < 1) throw std::invalid_argument("MaxPool1d: sequence shorter than pool");
    in_rows_ = x.rows();
    Mat<T> y(n_seq * out_len, channels);
    argmax_.resize(static_cast<std::size_t>(y.size()));
    for (Index s = 0; s < n_seq; ++s) {
        for (int o = 0; o < out_len; ++o) {
            const Index out_row = s * out_len + o;
            const Index first = (s * length + static_cast<Index>(o) * pool_) * channels;
            T* out = y.data() + out_row * channels;
            Index* arg = argmax_.data() + out_row * channels;
            for (Index c = 0; c < channels; ++c) {
                out[c] = x.data()[first + c];
                arg[c] = first + c;
            }
            for (int k = 1; k < pool_; ++k) {
                const Index base = first + k * channels;
                for (Index c = 0; c < channels; ++c) {
                    const T v = x.data()[base + c];
                    if (v > out[c]) {
                        out[c] = v;
                        arg[c] = base + c;
                    }
                }
            }
        }
    }
    return y;
}

template <typename T>
Mat<T> MaxPool1d<T>::backward(const Mat<T>& dy) const {
    Mat<T> dx = Mat<T>::Zero(in_rows_, dy.cols());
    for (Index k = 0; k < dy.size(); ++k) {
        dx.data()[argmax_[static_cast<std::size_t>(k)]] += dy.data()[k];
    }
    return dx;
}

// ------------------------------------------------------------ MeanPool1d

template <typename T>
Mat<T> MeanPool1d<T>::forward(const Mat<T>& x, int length) {
    length_ = length;
    in_rows_ = x.rows();
    if (window_ == 1) return x;
    const Index channels = x.cols();
    const Index n_seq = x.rows() / length;
    const int out_len = output_length(length);
    Mat<T> y = Mat<T>::Zero(n_seq * out_len, channels);
    for (Index s = 0; s < n_seq; ++s) {
        for (int o = 0; o < out_len; ++o) {
            const int begin = o * window_;
            const int end = std::min(length, begin + window_);
            T* out = y.data() + (s * out_len + o) * channels;
            const T* src = x.data() + (s * length + begin) * channels;
            for (int t = begin; t < end; ++t, src += channels) {
                for (Index c = 0; c < channels; ++c) out[c] += src[c];
            }
            const T scale = T(1) / static_cast<T>(end - begin);
            for (Index c = 0; c < channels; ++c) out[c] *= scale;
        }
    }
    return y;
}

template <typename T>
Mat<T> MeanPool1d<T>::backward(const Mat<T>& dy) const {
    if (window_ == 1) return dy;
    const Index channels = dy.cols();
    const int out_len = output_length(length_);
    const Index n_seq = in_rows_ / length_;
    Mat<T> dx(in_rows_, channels);
    for (Index s = 0; s < n_seq; ++s) {
        for (int o = 0; o < out_len; ++o) {
            const int begin = o * window_;
            const int end = std::min(length_, begin + window_);
            const T scale = T(1) / static_cast<T>(end - begin);
            const T* g = dy.data() + (s * out_len + o) * channels;
            T* dst = dx.data() + (s * length_ + begin) * channels;
            for (int t = begin; t < end; ++t, dst += channels) {
                for (Index c = 0; c < channels; ++c) dst[c] = g[c] * scale;
            }
        }
    }
    return dx;
}

// ----------------------------------------------------------------- Dense

template <typename T>
Dense<T>::Dense(int in, int out, std::string name) {
    if (in < 1 || out < 1) throw std::invalid_argument("Dense " + name + ": bad dimensions");
    weight_ = {name + ".kernel", Mat<T>::Zero(in, out), {}};
    bias_ = {name + ".bias", Mat<T>::Zero(1, out), {}};
    weight_.zero_grad();
    bias_.zero_grad();
}

template <typename T>
void Dense<T>::init(std::mt19937_64& rng) {
    glorot_uniform(weight_.value, static_cast<double>(weight_.value.rows()),
                   static_cast<double>(weight_.value.cols()), rng);
    bias_.value.setZero();
}

template <typename T>
Mat<T> Dense<T>::forward(const Mat<T>& x) {
    if (x.cols() != weight_.value.rows()) throw std::invalid_argument("Dense: input width mismatch");
    input_ = x;
    Mat<T> y(x.rows(), weight_.value.cols());
    y.noalias() = x * weight_.value;
    y.rowwise() += bias_.value.row(0);
    return y;
}

template <typename T>
Mat<T> Dense<T>::backward(const Mat<T>& dy) {
    weight_.grad.noalias() += input_.transpose() * dy;
    bias_.grad += dy.colwise().sum();
    return dy * weight_.value.transpose();
}

// ------------------------------------------------------------------ Lstm

namespace {

template <typename T>
T sigmoid(T z) {
    return T(1) / (T(1) + std::exp(-z));
}

}  // namespace

template <typename T>
Lstm<T>::Lstm(int in, int hidden, bool reverse, std::string name)
    : in_(in), hidden_(hidden), reverse_(reverse) {
    if (in < 1 || hidden < 1) throw std::invalid_argument("Lstm " + name + ": bad dimensions");
    w_input_ = {name + ".kernel", Mat<T>::Zero(in, 4 * hidden), {}};
    w_hidden_ = {name + ".recurrent_kernel", Mat<T>::Zero(hidden, 4 * hidden), {}};
    bias_ = {name + ".bias", Mat<T>::Zero(1, 4 * hidden), {}};
    w_input_.zero_grad();
    w_hidden_.zero_grad();
    bias_.zero_grad();
}

template <typename T>
void Lstm<T>::init(std::mt19937_64& rng) {
    glorot_uniform(w_input_.value, in_, 4.0 * hidden_, rng);
    // Orthogonal recurrent kernel: rows of an orthonormal basis.
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::MatrixXd a(4 * hidden_, hidden_);
    for (Index i = 0; i < a.size(); ++i) a.data()[i] = normal(rng);
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
    Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(4 * hidden_, hidden_);
    // Sign fix so the draw is a proper sample from the orthogonal group.
    const Eigen::MatrixXd r = qr.matrixQR().topRows(hidden_).template triangularView<Eigen::Upper>();
    for (int j = 0; j < hidden_; ++j) {
        if (r(j, j) < 0) q.col(j) *= -1.0;
    }
    w_hidden_.value = q.transpose().template cast<T>();
    bias_.value.setZero();
    bias_.value.block(0, hidden_, 1, hidden_).setOnes();  // forget gate
}

template <typename T>
Mat<T> Lstm<T>::forward(const Mat<T>& x, int length) {
    if (x.cols() != in_ || x.rows() % length != 0) {
        throw std::invalid_argument("Lstm: input shape mismatch");
    }
    const int H = hidden_;
    length_ = length;
    batch_ = x.rows() / length;
    input_ = x;
    Mat<T> xw(x.rows(), 4 * H);
    xw.noalias() = x * w_input_.value;

    gates_.assign(length, Mat<T>());
    cell_.assign(length, Mat<T>());
    hidden_state_.assign(length, Mat<T>());
    Mat<T> out(x.rows(), H);
    Mat<T> h_prev = Mat<T>::Zero(batch_, H);
    Mat<T> c_prev = Mat<T>::Zero(batch_, H);
    Mat<T> z(batch_, 4 * H);

    for (int p = 0; p < length; ++p) {
        const int t = reverse_ ? length - 1 - p : p;
        for (Index s = 0; s < batch_; ++s) z.row(s) = xw.row(s * length + t);
        z.noalias() += h_prev * w_hidden_.value;
        z.rowwise() += bias_.value.row(0);

        Mat<T>& g = gates_[p];
        g.resize(batch_, 4 * H);
        for (Index s = 0; s < batch_; ++s) {
            for (int k = 0; k < H; ++k) {
                g(s, k) = sigmoid(z(s, k));
                g(s, H + k) = sigmoid(z(s, H + k));
                g(s, 2 * H + k) = std::tanh(z(s, 2 * H + k));
                g(s, 3 * H + k) = sigmoid(z(s, 3 * H + k));
            }
        }
        Mat<T> c = g.leftCols(H).cwiseProduct(g.middleCols(2 * H, H)) +
                   g.middleCols(H, H).cwiseProduct(c_prev);
        Mat<T> h = g.rightCols(H).cwiseProduct(c.array().tanh().matrix());
        for (Index s = 0; s < batch_; ++s) out.row(s * length + t) = h.row(s);
        cell_[p] = c;
        hidden_state_[p] = h;
        c_prev = std::move(c);
        h_prev = std::move(h);
    }
    return out;
}

template <typename T>
Mat<T> Lstm<T>::backward(const Mat<T>& dh_seq) {
    const int H = hidden_;
    const int length = length_;
    Mat<T> dxw(batch_ * length, 4 * H);
    Mat<T> dh_next = Mat<T>::Zero(batch_, H);
    Mat<T> dc_next = Mat<T>::Zero(batch_, H);
    Mat<T> dz(batch_, 4 * H);
    const Mat<T> zeros = Mat<T>::Zero(batch_, H);

    for (int p = length - 1; p >= 0; --p) {
        const int t = reverse_ ? length - 1 - p : p;
        const Mat<T>& g = gates_[p];
        const Mat<T>& c_prev = p > 0 ? cell_[p - 1] : zeros;
        const Mat<T>& h_prev = p > 0 ? hidden_state_[p - 1] : zeros;
        for (Index s = 0; s < batch_; ++s) {
            for (int k = 0; k < H; ++k) {
                const T i = g(s, k), f = g(s, H + k), gg = g(s, 2 * H + k), o = g(s, 3 * H + k);
                const T tc = std::tanh(cell_[p](s, k));
                const T dh = dh_seq(s * length + t, k) + dh_next(s, k);
                const T dc = dc_next(s, k) + dh * o * (T(1) - tc * tc);
                dz(s, k) = dc * gg * i * (T(1) - i);
                dz(s, H + k) = dc * c_prev(s, k) * f * (T(1) - f);
                dz(s, 2 * H + k) = dc * i * (T(1) - gg * gg);
                dz(s, 3 * H + k) = dh * tc * o * (T(1) - o);
                dc_next(s, k) = dc * f;
            }
        }
        w_hidden_.grad.noalias() += h_prev.transpose() * dz;
        bias_.grad += dz.colwise().sum();
        dh_next.noalias() = dz * w_hidden_.value.transpose();
        for (Index s = 0; s < batch_; ++s) dxw.row(s * length + t) = dz.row(s);
    }
    w_input_.grad.noalias() += input_.transpose() * dxw;
    return dxw * w_input_.value.transpose();
}

// ---------------------------------------------------------------- BiLstm

template <typename T>
BiLstm<T>::BiLstm(int in, int hidden, bool return_sequences, std::string name)
    : fwd_(in, hidden, false, name + ".forward"),
      bwd_(in, hidden, true, name + ".backward"),
      return_sequences_(return_sequences) {}

template <typename T>
void BiLstm<T>::init(std::mt19937_64& rng) {
    fwd_.init(rng);
    bwd_.init(rng);
}

template <typename T>
ParamList<T> BiLstm<T>::params() {
    auto p = fwd_.params();
    auto b = bwd_.params();
    p.insert(p.end(), b.begin(), b.end());
    return p;
}

template <typename T>
Mat<T> BiLstm<T>::forward(const Mat<T>& x, int length) {
    length_ = length;
    batch_ = x.rows() / length;
    const Mat<T> yf = fwd_.forward(x, length);
    const Mat<T> yb = bwd_.forward(x, length);
    const int H = fwd_.hidden();
    if (return_sequences_) {
        Mat<T> y(x.rows(), 2 * H);
        y.leftCols(H) = yf;
        y.rightCols(H) = yb;
        return y;
    }
    Mat<T> y(batch_, 2 * H);
    for (Index s = 0; s < batch_; ++s) {
        y.row(s).leftCols(H) = yf.row(s * length + length - 1);
        y.row(s).rightCols(H) = yb.row(s * length);
    }
    return y;
}

template <typename T>
Mat<T> BiLstm<T>::backward(const Mat<T>& dy) {
    const int H = fwd_.hidden();
    Mat<T> df, db;
    if (return_sequences_) {
        df = dy.leftCols(H);
        db = dy.rightCols(H);
    } else {
        df = Mat<T>::Zero(batch_ * length_, H);
        db = Mat<T>::Zero(batch_ * length_, H);
        for (Index s = 0; s < batch_; ++s) {
            df.row(s * length_ + length_ - 1) = dy.row(s).leftCols(H);
            db.row(s * length_) = dy.row(s).rightCols(H);
        }
    }
    Mat<T> dx = fwd_.backward(df);
    dx += bwd_.backward(db);
    return dx;
}

// ------------------------------------------------------- softmax / loss

template <typename T>
Mat<T> softmax(const Mat<T>& logits) {
    Mat<T> p(logits.rows(), logits.cols());
    for (Index r = 0; r < logits.rows(); ++r) {
        const T m = logits.row(r).maxCoeff();
        p.row(r) = (logits.row(r).array() - m).exp().matrix();
        p.row(r) /= p.row(r).sum();
    }
    return p;
}

template <typename T>
double cross_entropy(const Mat<T>& logits, const std::vector<int>& labels, Mat<T>& grad) {
    if (static_cast<std::size_t>(logits.rows()) != labels.size()) {
        throw std::invalid_argument("cross_entropy: label count mismatch");
    }
    grad = softmax(logits);
    const auto n = static_cast<double>(logits.rows());
    double loss = 0.0;
    for (Index r = 0; r < logits.rows(); ++r) {
        const int y = labels[static_cast<std::size_t>(r)];
        const T m = logits.row(r).maxCoeff();
        const double lse =
            static_cast<double>(m) +
            std::log(static_cast<double>((logits.row(r).array() - m).exp().sum()));
        loss += lse - static_cast<double>(logits(r, y));
        grad(r, y) -= T(1);
    }
    grad /= static_cast<T>(n);
    return loss / n;
}

// ------------------------------------------------------------------ Adam

template <typename T>
void Adam<T>::step(const ParamList<T>& params) {
    if (m_.empty()) {
        for (const auto* p : params) {
            m_.push_back(Mat<T>::Zero(p->value.rows(), p->value.cols()));
            v_.push_back(Mat<T>::Zero(p->value.rows(), p->value.cols()));
        }
    }
    if (m_.size() != params.size()) throw std::logic_error("Adam: parameter list changed");
    ++t_;
    const double lr_t = lr_ * std::sqrt(1.0 - std::pow(beta2_, static_cast<double>(t_))) /
                        (1.0 - std::pow(beta1_, static_cast<double>(t_)));
    const T b1 = static_cast<T>(beta1_), b2 = static_cast<T>(beta2_);
    const T step = static_cast<T>(lr_t), eps = static_cast<T>(eps_);
    for (std::size_t k = 0; k < params.size(); ++k) {
        auto& p = *params[k];
        auto m = m_[k].array();
        auto v = v_[k].array();
        const auto g = p.grad.array();
        m = b1 * m + (T(1) - b1) * g;
        v = b2 * v + (T(1) - b2) * g.square();
        p.value.array() -= step * m / (v.sqrt() + eps);
    }
}

#define RUNSTYLE_NN_INSTANTIATE(T)                                                         \
    template void glorot_uniform<T>(Mat<T>&, double, double, std::mt19937_64&);            \
    template class Conv1d<T>;                                                               \
    template class Relu<T>;                                                                 \
    template class MaxPool1d<T>;                                                            \
    template class MeanPool1d<T>;                                                           \
    template class Dense<T>;                                                                \
    template class Lstm<T>;                                                                 \
    template class BiLstm<T>;                                                               \
    template class Adam<T>;                                                                 \
    template Mat<T> softmax<T>(const Mat<T>&);                                              \
    template double cross_entropy<T>(const Mat<T>&, const std::vector<int>&, Mat<T>&);

RUNSTYLE_NN_INSTANTIATE(float)
RUNSTYLE_NN_INSTANTIATE(double)

}  // namespace runstyle::nn
