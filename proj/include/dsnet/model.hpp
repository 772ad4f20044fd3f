#pragma once

#include <cstdio>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "dsnet/error.hpp"
#include "dsnet/layers.hpp"
#include "dsnet/optimizer.hpp"
#include "dsnet/rng.hpp"
#include "dsnet/tensor.hpp"

namespace dsnet {

inline std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline std::string join_longs(const std::vector<long>& v) {
    std::ostringstream os;
    for (std::size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
    return os.str();
}

inline std::vector<long> parse_longs(const std::string& s) {
    std::vector<long> out;
    std::istringstream is(s);
    std::string item;
    while (std::getline(is, item, ',')) {
        if (item.empty()) continue;
        out.push_back(std::stol(item));
    }
    return out;
}

struct ModelConfig {
    std::string kind = "dsnet";  // "dsnet" | "teacher"
    long input_h = 16;
    long input_w = 16;
    long input_c = 1;
    long num_classes = 2;
    // dsnet: the three conv block widths; teacher: [0] is the uniform
    // stem/block width
    std::vector<long> conv_widths = {8, 16, 32};
    // optional hidden dense widths before the classifier (empty in every
    // shipped config)
    std::vector<long> dense_widths;
    double dropout_rate = 0.25;
    long residual_blocks = 0;  // teacher only
    long kernel = 3;

    std::string to_text() const {
        std::ostringstream os;
        os << "kind=" << kind << "\n"
           << "input_h=" << input_h << "\n"
           << "input_w=" << input_w << "\n"
           << "input_c=" << input_c << "\n"
           << "num_classes=" << num_classes << "\n"
           << "conv_widths=" << join_longs(conv_widths) << "\n"
           << "dense_widths=" << join_longs(dense_widths) << "\n"
           << "dropout_rate=" << format_double(dropout_rate) << "\n"
           << "residual_blocks=" << residual_blocks << "\n"
           << "kernel=" << kernel << "\n";
        return os.str();
    }

    static ModelConfig from_text(const std::string& text) {
        ModelConfig cfg;
        cfg.conv_widths.clear();
        std::istringstream is(text);
        std::string line;
        while (std::getline(is, line)) {
            if (line.empty() || line[0] == '#') continue;
            const auto eq = line.find('=');
            if (eq == std::string::npos) {
                throw FormatError("bad model config line: " + line);
            }
            const std::string key = line.substr(0, eq);
            const std::string value = line.substr(eq + 1);
            try {
                if (key == "kind") cfg.kind = value;
                else if (key == "input_h") cfg.input_h = std::stol(value);
                else if (key == "input_w") cfg.input_w = std::stol(value);
                else if (key == "input_c") cfg.input_c = std::stol(value);
                else if (key == "num_classes") cfg.num_classes = std::stol(value);
                else if (key == "conv_widths") cfg.conv_widths = parse_longs(value);
                else if (key == "dense_widths") cfg.dense_widths = parse_longs(value);
                else if (key == "dropout_rate") cfg.dropout_rate = std::stod(value);
                else if (key == "residual_blocks") cfg.residual_blocks = std::stol(value);
                else if (key == "kernel") cfg.kernel = std::stol(value);
                else throw FormatError("unknown model config key: " + key);
            } catch (const std::invalid_argument&) {
                throw FormatError("bad model config value in: " + line);
            } catch (const std::out_of_range&) {
                throw FormatError("model config value out of range in: " +
                                  line);
            }
        }
        return cfg;
    }
};

// An ordered layer stack with its parameter/cache states. Single-owner
// while training (forward/backward mutate the caches); a cleared model in
// eval mode is safe to share for inference.
struct Model {
    std::string name;  // "teacher" | "student"
    ModelConfig config;
    std::vector<LayerSpec> specs;
    std::vector<LayerState> states;

    long num_classes() const { return config.num_classes; }

    Shape input_shape(long batch = 1) const {
        return {batch, config.input_h, config.input_w, config.input_c};
    }

    void init_params(RngState& rng) {
        states.clear();
        states.reserve(specs.size());
        for (const LayerSpec& s : specs) {
            states.push_back(init_layer_state(s, rng));
        }
    }

    void check_input(const Tensor& batch) const {
        if (batch.rank() != 4 || batch.shape[1] != config.input_h ||
            batch.shape[2] != config.input_w ||
            batch.shape[3] != config.input_c) {
            throw ShapeError("model " + name + " expects input [n," +
                             std::to_string(config.input_h) + "," +
                             std::to_string(config.input_w) + "," +
                             std::to_string(config.input_c) + "], got " +
                             shape_to_string(batch.shape));
        }
    }

    Tensor forward(const Tensor& batch, Mode mode, RngState* rng = nullptr) {
        check_input(batch);
        if (states.size() != specs.size()) {
            throw UsageError("model parameters not initialized");
        }
        Tensor x = batch;
        for (std::size_t i = 0; i < specs.size(); ++i) {
            x = layer_forward(specs[i], states[i], x, mode, rng);
        }
        return x;
    }

    // Reverse pass over the cached forward; returns param grads keyed
    // "layer<i>.<name>" ready for adam_step.
    std::map<std::string, Tensor> backward(const Tensor& upstream) {
        std::map<std::string, Tensor> grads;
        Tensor g = upstream;
        for (std::size_t i = specs.size(); i-- > 0;) {
            LayerGrads lg = layer_backward(specs[i], states[i], g);
            g = std::move(lg.input_grad);
            for (auto& [name, grad] : lg.param_grads) {
                grads["layer" + std::to_string(i) + "." + name] =
                    std::move(grad);
            }
        }
        return grads;
    }

    NamedParams named_parameters() {
        NamedParams out;
        for (std::size_t i = 0; i < states.size(); ++i) {
            collect_layer_params(states[i],
                                 "layer" + std::to_string(i) + ".", out);
        }
        return out;
    }

    void clear_caches() {
        for (auto& st : states) st.clear_cache();
    }
};

inline void check_model_config_common(const ModelConfig& cfg) {
    if (cfg.input_h < 1 || cfg.input_w < 1 || cfg.input_c < 1) {
        throw ConfigError("model input extents must be >= 1");
    }
    if (cfg.num_classes < 2) {
        throw ConfigError("model needs at least 2 classes");
    }
    if (cfg.kernel < 1 || cfg.kernel % 2 == 0) {
        throw ConfigError("conv kernel must be odd (shapes are preserved "
                          "with same-padding)");
    }
    if (!(cfg.dropout_rate >= 0.0 && cfg.dropout_rate < 1.0)) {
        throw ConfigError("dropout rate must lie in [0,1)");
    }
    for (long w : cfg.conv_widths) {
        if (w < 1) throw ConfigError("conv widths must be >= 1");
    }
    for (long w : cfg.dense_widths) {
        if (w < 1) throw ConfigError("dense widths must be >= 1");
    }
}

// Student: [conv -> relu -> maxpool 2x2] x 3, flatten, dropout, dense to
// class logits. Convolutions are stride-1 with same-padding so the three
// pools alone set the spatial reduction. Softmax is applied only inside the
// losses and the predict path, never stored as a layer here.
inline Model build_dsnet(ModelConfig cfg) {
    cfg.kind = "dsnet";
    check_model_config_common(cfg);
    if (cfg.conv_widths.size() != 3) {
        throw ConfigError("DSNet takes exactly three conv widths, got " +
                          std::to_string(cfg.conv_widths.size()));
    }
    Model m;
    m.name = "student";
    m.config = cfg;
    const long pad = (cfg.kernel - 1) / 2;
    long cin = cfg.input_c;
    for (long width : cfg.conv_widths) {
        m.specs.push_back(
            conv2d_spec(cfg.kernel, cfg.kernel, cin, width, 1, pad));
        m.specs.push_back(relu_spec());
        m.specs.push_back(maxpool2d_spec(2, 2));
        cin = width;
    }
    m.specs.push_back(flatten_spec());
    m.specs.push_back(dropout_spec(cfg.dropout_rate));
    // validate the stack; pooling a too-small input throws ShapeError here
    Shape shape = m.input_shape(1);
    for (std::size_t i = 0; i < m.specs.size(); ++i) {
        shape = layer_output_shape(m.specs[i], shape);
    }
    long features = shape[1];
    for (long width : cfg.dense_widths) {
        m.specs.push_back(dense_spec(features, width));
        m.specs.push_back(relu_spec());
        features = width;
    }
    m.specs.push_back(dense_spec(features, cfg.num_classes));
    return m;
}

// Teacher: stem conv+relu, N residual blocks at a uniform width, global
// average pool, dense to class logits.
inline Model build_teacher(ModelConfig cfg) {
    cfg.kind = "teacher";
    check_model_config_common(cfg);
    if (cfg.residual_blocks < 1) {
        throw ConfigError("teacher needs at least one residual block");
    }
    if (cfg.conv_widths.empty()) {
        throw ConfigError("teacher needs a conv width");
    }
    const long width = cfg.conv_widths[0];
    Model m;
    m.name = "teacher";
    m.config = cfg;
    const long pad = (cfg.kernel - 1) / 2;
    m.specs.push_back(
        conv2d_spec(cfg.kernel, cfg.kernel, cfg.input_c, width, 1, pad));
    m.specs.push_back(relu_spec());
    for (long b = 0; b < cfg.residual_blocks; ++b) {
        m.specs.push_back(residual_block_spec(width, cfg.kernel));
    }
    m.specs.push_back(global_avg_pool_spec());
    m.specs.push_back(dense_spec(width, cfg.num_classes));
    Shape shape = m.input_shape(1);
    for (const LayerSpec& s : m.specs) shape = layer_output_shape(s, shape);
    return m;
}

inline Model build_model(const ModelConfig& cfg) {
    if (cfg.kind == "dsnet") return build_dsnet(cfg);
    if (cfg.kind == "teacher") return build_teacher(cfg);
    throw ConfigError("unknown model kind '" + cfg.kind + "'");
}

inline long count_parameters(const Model& m) {
    long total = 0;
    for (const LayerSpec& s : m.specs) total += layer_param_count(s);
    return total;
}

inline Tensor forward_logits(Model& m, const Tensor& batch, Mode mode,
                             RngState* rng = nullptr) {
    return m.forward(batch, mode, rng);
}

// Shipped configurations. The desk pair trains in seconds on a CPU; the
// default pair matches the canonical 224x224x3 input.
inline ModelConfig desk_dsnet_config() {
    ModelConfig cfg;
    cfg.kind = "dsnet";
    cfg.input_h = cfg.input_w = 16;
    cfg.input_c = 1;
    cfg.conv_widths = {8, 16, 32};
    return cfg;
}

inline ModelConfig desk_teacher_config() {
    ModelConfig cfg;
    cfg.kind = "teacher";
    cfg.input_h = cfg.input_w = 16;
    cfg.input_c = 1;
    cfg.conv_widths = {12};
    cfg.residual_blocks = 3;
    cfg.dropout_rate = 0.0;
    return cfg;
}

inline ModelConfig default_dsnet_config() {
    ModelConfig cfg;
    cfg.kind = "dsnet";
    cfg.input_h = cfg.input_w = 224;
    cfg.input_c = 3;
    cfg.conv_widths = {32, 64, 128};
    return cfg;
}

inline ModelConfig default_teacher_config() {
    ModelConfig cfg;
    cfg.kind = "teacher";
    cfg.input_h = cfg.input_w = 224;
    cfg.input_c = 3;
    cfg.conv_widths = {64};
    cfg.residual_blocks = 6;
    cfg.dropout_rate = 0.0;
    return cfg;
}

}  // namespace dsnet
