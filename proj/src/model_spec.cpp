#include "runstyle/model_spec.hpp"

#include <stdexcept>

namespace runstyle {

using nlohmann::json;

CnnLstmSpec CnnLstmSpec::full() { return CnnLstmSpec{}; }

CnnLstmSpec CnnLstmSpec::desk() {
    CnnLstmSpec s;
    s.decimation = 5;
    s.conv_blocks = {{8, 8}, {16, 16}, {24, 24}};
    s.reduce_factor = 8;
    s.lstm_hidden = 24;
    s.head = {32};
    return s;
}

int CnnLstmSpec::subsegment_length() const { return segment_samples / subsegments; }

int CnnLstmSpec::cnn_output_length() const {
    int len = subsegment_length() / decimation;
    if (pooling == PoolingMode::per_block) {
        for (std::size_t b = 0; b < conv_blocks.size(); ++b) len /= pool_size;
    } else {
        len /= pool_size;
    }
    return (len + reduce_factor - 1) / reduce_factor;
}

int CnnLstmSpec::embedding_size() const {
    return cnn_output_length() * (conv_blocks.empty() ? channels : conv_blocks.back().back());
}

void CnnLstmSpec::validate() const {
    auto fail = [](const std::string& why) { throw std::invalid_argument("CnnLstmSpec: " + why); };
    if (segment_samples < 1 || subsegments < 1 || segment_samples % subsegments != 0) {
        fail("segment_samples must split evenly into subsegments");
    }
    if (decimation < 1 || subsegment_length() % decimation != 0) {
        fail("decimation must divide the sub-segment length");
    }
    if (channels < 1 || kernel < 1 || kernel % 2 == 0) fail("kernel must be odd and positive");
    if (conv_blocks.empty()) fail("need at least one convolution block");
    for (const auto& block : conv_blocks) {
        if (block.empty()) fail("empty convolution block");
        for (int f : block) {
            if (f < 1) fail("filter counts must be positive");
        }
    }
    if (pool_size < 1 || reduce_factor < 1) fail("pool sizes must be positive");
    int len = subsegment_length() / decimation;
    const int pools = pooling == PoolingMode::per_block ? static_cast<int>(conv_blocks.size()) : 1;
    for (int p = 0; p < pools; ++p) {
        len /= pool_size;
        if (len < 1) fail("pooling reduces the sub-segment below one sample");
    }
    if (lstm_layers < 1 || lstm_hidden < 1) fail("need at least one recurrent layer");
    for (int h : head) {
        if (h < 1) fail("head sizes must be positive");
    }
    if (classes < 2) fail("need at least two classes");
}

CnnSpec CnnSpec::full() { return CnnSpec{}; }

CnnSpec CnnSpec::desk() {
    CnnSpec s;
    s.decimation = 5;
    s.filters = {8, 16, 24, 32};
    s.head = {48, 32, 16};
    return s;
}

int CnnSpec::flatten_size() const {
    int len = segment_samples / decimation;
    for (std::size_t b = 0; b < filters.size(); ++b) len /= pool_size;
    return len * (filters.empty() ? channels : filters.back());
}

void CnnSpec::validate() const {
    auto fail = [](const std::string& why) { throw std::invalid_argument("CnnSpec: " + why); };
    if (segment_samples < 1 || decimation < 1 || segment_samples % decimation != 0) {
        fail("decimation must divide segment_samples");
    }
    if (channels < 1 || kernel < 1 || kernel % 2 == 0) fail("kernel must be odd and positive");
    if (filters.empty()) fail("need at least one convolution block");
    for (int f : filters) {
        if (f < 1) fail("filter counts must be positive");
    }
    if (pool_size < 1) fail("pool size must be positive");
    if (flatten_size() < 1) fail("pooling reduces the segment below one sample");
    for (int h : head) {
        if (h < 1) fail("head sizes must be positive");
    }
    if (classes < 2) fail("need at least two classes");
}

void to_json(json& j, const CnnLstmSpec& s) {
    j = json{{"type", "cnn_lstm"},
             {"segment_samples", s.segment_samples},
             {"subsegments", s.subsegments},
             {"channels", s.channels},
             {"decimation", s.decimation},
             {"kernel", s.kernel},
             {"conv_blocks", s.conv_blocks},
             {"pooling_mode", s.pooling == PoolingMode::literal ? "literal" : "per_block"},
             {"pool_size", s.pool_size},
             {"reduce_factor", s.reduce_factor},
             {"lstm_layers", s.lstm_layers},
             {"lstm_hidden", s.lstm_hidden},
             {"head", s.head},
             {"classes", s.classes}};
}

void from_json(const json& j, CnnLstmSpec& s) {
    s.segment_samples = j.value("segment_samples", s.segment_samples);
    s.subsegments = j.value("subsegments", s.subsegments);
    s.channels = j.value("channels", s.channels);
    s.decimation = j.value("decimation", s.decimation);
    s.kernel = j.value("kernel", s.kernel);
    s.conv_blocks = j.value("conv_blocks", s.conv_blocks);
    const std::string mode = j.value("pooling_mode", std::string("per_block"));
    if (mode == "literal") {
        s.pooling = PoolingMode::literal;
    } else if (mode == "per_block") {
        s.pooling = PoolingMode::per_block;
    } else {
        throw std::invalid_argument("unknown pooling_mode: " + mode);
    }
    s.pool_size = j.value("pool_size", s.pool_size);
    s.reduce_factor = j.value("reduce_factor", s.reduce_factor);
    s.lstm_layers = j.value("lstm_layers", s.lstm_layers);
    s.lstm_hidden = j.value("lstm_hidden", s.lstm_hidden);
    s.head = j.value("head", s.head);
    s.classes = j.value("classes", s.classes);
}

void to_json(json& j, const CnnSpec& s) {
    j = json{{"type", "cnn"},
             {"segment_samples", s.segment_samples},
             {"channels", s.channels},
             {"decimation", s.decimation},
             {"kernel", s.kernel},
             {"filters", s.filters},
             {"pool_size", s.pool_size},
             {"head", s.head},
             {"classes", s.classes}};
}

void from_json(const json& j, CnnSpec& s) {
    s.segment_samples = j.value("segment_samples", s.segment_samples);
    s.channels = j.value("channels", s.channels);
    s.decimation = j.value("decimation", s.decimation);
    s.kernel = j.value("kernel", s.kernel);
    s.filters = j.value("filters", s.filters);
    s.pool_size = j.value("pool_size", s.pool_size);
    s.head = j.value("head", s.head);
    s.classes = j.value("classes", s.classes);
}

}  // namespace runstyle
