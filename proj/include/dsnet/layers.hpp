#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "dsnet/error.hpp"
#include "dsnet/rng.hpp"
#include "dsnet/tensor.hpp"

namespace dsnet {

enum class LayerKind {
    conv2d,
    maxpool2d,
    dense,
    relu,
    dropout,
    flatten,
    softmax_t,
    residual_block,
    global_avg_pool,
};

enum class Mode { train, eval };

inline const char* layer_kind_name(LayerKind k) {
    switch (k) {
        case LayerKind::conv2d: return "conv2d";
        case LayerKind::maxpool2d: return "maxpool2d";
        case LayerKind::dense: return "dense";
        case LayerKind::relu: return "relu";
        case LayerKind::dropout: return "dropout";
        case LayerKind::flatten: return "flatten";
        case LayerKind::softmax_t: return "softmaxT";
        case LayerKind::residual_block: return "residual_block";
        case LayerKind::global_avg_pool: return "global_avg_pool";
    }
    return "?";
}

struct LayerSpec {
    LayerKind kind = LayerKind::relu;
    // conv2d
    long kernel_h = 0, kernel_w = 0;
    long in_channels = 0, out_channels = 0;
    long stride = 1, padding = 0;
    // maxpool2d (stride 0 means "same as window")
    long pool_h = 0, pool_w = 0, pool_stride = 0;
    // dense
    long in_features = 0, out_features = 0;
    // dropout
    double rate = 0.0;
    // softmax_t
    double temperature = 1.0;
    // residual_block (in == out channels across the shortcut)
    long channels = 0;
};

inline LayerSpec conv2d_spec(long kernel_h, long kernel_w, long in_channels,
                             long out_channels, long stride = 1,
                             long padding = 0) {
    if (kernel_h < 1 || kernel_w < 1 || in_channels < 1 || out_channels < 1 ||
        stride < 1 || padding < 0) {
        throw ShapeError("conv2d spec: extents and stride must be >= 1");
    }
    LayerSpec s;
    s.kind = LayerKind::conv2d;
    s.kernel_h = kernel_h;
    s.kernel_w = kernel_w;
    s.in_channels = in_channels;
    s.out_channels = out_channels;
    s.stride = stride;
    s.padding = padding;
    return s;
}

inline LayerSpec maxpool2d_spec(long pool_h, long pool_w, long stride = 0) {
    if (pool_h < 1 || pool_w < 1 || stride < 0) {
        throw ShapeError("maxpool2d spec: window extents must be >= 1");
    }
    LayerSpec s;
    s.kind = LayerKind::maxpool2d;
    s.pool_h = pool_h;
    s.pool_w = pool_w;
    s.pool_stride = stride == 0 ? pool_h : stride;
    return s;
}

inline LayerSpec dense_spec(long in_features, long out_features) {
    if (in_features < 1 || out_features < 1) {
        throw ShapeError("dense spec: feature extents must be >= 1");
    }
    LayerSpec s;
    s.kind = LayerKind::dense;
    s.in_features = in_features;
    s.out_features = out_features;
    return s;
}

inline LayerSpec relu_spec() {
    LayerSpec s;
    s.kind = LayerKind::relu;
    return s;
}

inline LayerSpec dropout_spec(double rate) {
    if (!(rate >= 0.0 && rate < 1.0)) {
        throw DomainError("dropout rate must lie in [0,1), got " +
                          std::to_string(rate));
    }
    LayerSpec s;
    s.kind = LayerKind::dropout;
    s.rate = rate;
    return s;
}

inline LayerSpec flatten_spec() {
    LayerSpec s;
    s.kind = LayerKind::flatten;
    return s;
}

inline LayerSpec softmax_t_spec(double temperature) {
    if (!(temperature > 0.0) || !std::isfinite(temperature)) {
        throw DomainError("softmax temperature must be positive and finite");
    }
    LayerSpec s;
    s.kind = LayerKind::softmax_t;
    s.temperature = temperature;
    return s;
}

inline LayerSpec residual_block_spec(long channels, long kernel = 3) {
    if (channels < 1) throw ShapeError("residual block needs channels >= 1");
    if (kernel < 1 || kernel % 2 == 0) {
        throw ShapeError("residual block kernel must be odd so the shortcut "
                         "shapes match");
    }
    LayerSpec s;
    s.kind = LayerKind::residual_block;
    s.channels = channels;
    s.kernel_h = kernel;
    s.kernel_w = kernel;
    s.padding = (kernel - 1) / 2;
    return s;
}

inline LayerSpec global_avg_pool_spec() {
    LayerSpec s;
    s.kind = LayerKind::global_avg_pool;
    return s;
}

// Parameters plus the forward caches backward needs. Single-owner while a
// forward/backward pair is in flight.
struct LayerState {
    std::map<std::string, Tensor> params;
    std::vector<LayerState> children;  // residual block: [conv1, conv2]

    bool has_cache = false;
    Tensor cached_input;
    Tensor cached_output;              // softmax_t probabilities
    Tensor cached_mask;                // dropout
    Tensor cached_pre1, cached_pre2;   // residual pre-activations
    std::vector<long> cached_argmax;   // maxpool winner per output element

    // grad_check support: keep the sampled dropout mask across forwards so
    // finite differences see a fixed function.
    bool freeze_dropout_mask = false;

    void clear_cache() {
        has_cache = false;
        cached_input = Tensor();
        cached_output = Tensor();
        cached_pre1 = Tensor();
        cached_pre2 = Tensor();
        cached_argmax.clear();
        if (!freeze_dropout_mask) cached_mask = Tensor();
        for (auto& c : children) c.clear_cache();
    }
};

// He-scaled normal init for conv/dense weights (std = sqrt(2/fan_in)),
// zero biases.
inline LayerState init_layer_state(const LayerSpec& spec, RngState& rng) {
    LayerState st;
    switch (spec.kind) {
        case LayerKind::conv2d: {
            const double fan_in = static_cast<double>(
                spec.kernel_h * spec.kernel_w * spec.in_channels);
            st.params["weight"] = Tensor::normal(
                {spec.kernel_h, spec.kernel_w, spec.in_channels,
                 spec.out_channels},
                0.0, std::sqrt(2.0 / fan_in), rng);
            st.params["bias"] = Tensor::zeros({spec.out_channels});
            break;
        }
        case LayerKind::dense: {
            const double fan_in = static_cast<double>(spec.in_features);
            st.params["weight"] =
                Tensor::normal({spec.in_features, spec.out_features}, 0.0,
                               std::sqrt(2.0 / fan_in), rng);
            st.params["bias"] = Tensor::zeros({spec.out_features});
            break;
        }
        case LayerKind::residual_block: {
            const LayerSpec conv =
                conv2d_spec(spec.kernel_h, spec.kernel_w, spec.channels,
                            spec.channels, 1, spec.padding);
            st.children.push_back(init_layer_state(conv, rng));
            st.children.push_back(init_layer_state(conv, rng));
            break;
        }
        default:
            break;
    }
    return st;
}

inline long layer_param_count(const LayerSpec& spec) {
    switch (spec.kind) {
        case LayerKind::conv2d:
            return spec.kernel_h * spec.kernel_w * spec.in_channels *
                       spec.out_channels +
                   spec.out_channels;
        case LayerKind::dense:
            return spec.in_features * spec.out_features + spec.out_features;
        case LayerKind::residual_block:
            return 2 * (spec.kernel_h * spec.kernel_w * spec.channels *
                            spec.channels +
                        spec.channels);
        default:
            return 0;
    }
}

// Shape the layer would emit for a given input shape; throws ShapeError on
// any mismatch, which lets model builders validate a stack up front.
inline Shape layer_output_shape(const LayerSpec& spec, const Shape& in) {
    auto need_rank = [&](long r) {
        if (static_cast<long>(in.size()) != r) {
            throw ShapeError(std::string(layer_kind_name(spec.kind)) +
                             ": expected rank-" + std::to_string(r) +
                             " input, got " + shape_to_string(in));
        }
    };
    switch (spec.kind) {
        case LayerKind::conv2d: {
            need_rank(4);
            if (in[3] != spec.in_channels) {
                throw ShapeError("conv2d: input has " + std::to_string(in[3]) +
                                 " channels, spec expects " +
                                 std::to_string(spec.in_channels));
            }
            const long oh =
                (in[1] + 2 * spec.padding - spec.kernel_h) / spec.stride + 1;
            const long ow =
                (in[2] + 2 * spec.padding - spec.kernel_w) / spec.stride + 1;
            if (in[1] + 2 * spec.padding < spec.kernel_h ||
                in[2] + 2 * spec.padding < spec.kernel_w || oh < 1 || ow < 1) {
                throw ShapeError("conv2d: input " + shape_to_string(in) +
                                 " too small for kernel " +
                                 std::to_string(spec.kernel_h) + "x" +
                                 std::to_string(spec.kernel_w));
            }
            return {in[0], oh, ow, spec.out_channels};
        }
        case LayerKind::maxpool2d: {
            need_rank(4);
            if (in[1] < spec.pool_h || in[2] < spec.pool_w) {
                throw ShapeError("maxpool2d: input " + shape_to_string(in) +
                                 " too small for window " +
                                 std::to_string(spec.pool_h) + "x" +
                                 std::to_string(spec.pool_w));
            }
            const long oh = (in[1] - spec.pool_h) / spec.pool_stride + 1;
            const long ow = (in[2] - spec.pool_w) / spec.pool_stride + 1;
            return {in[0], oh, ow, in[3]};
        }
        case LayerKind::dense: {
            need_rank(2);
            if (in[1] != spec.in_features) {
                throw ShapeError("dense: input has " + std::to_string(in[1]) +
                                 " features, spec expects " +
                                 std::to_string(spec.in_features));
            }
            return {in[0], spec.out_features};
        }
        case LayerKind::relu:
        case LayerKind::dropout:
            return in;
        case LayerKind::flatten: {
            if (in.size() < 2) {
                throw ShapeError("flatten: expected rank >= 2, got " +
                                 shape_to_string(in));
            }
            long features = 1;
            for (std::size_t i = 1; i < in.size(); ++i) features *= in[i];
            return {in[0], features};
        }
        case LayerKind::softmax_t: {
            need_rank(2);
            if (in[1] < 2) {
                throw ShapeError("softmaxT: needs at least 2 classes, got " +
                                 shape_to_string(in));
            }
            return in;
        }
        case LayerKind::residual_block: {
            need_rank(4);
            if (in[3] != spec.channels) {
                throw ShapeError(
                    "residual block: shortcut expects " +
                    std::to_string(spec.channels) + " channels, input has " +
                    std::to_string(in[3]));
            }
            return in;
        }
        case LayerKind::global_avg_pool: {
            need_rank(4);
            return {in[0], in[3]};
        }
    }
    throw UsageError("unknown layer kind");
}

// Row i of a [batch,k] logits tensor becomes exp((a_j - max_i)/T) normalized
// over j. The row-max subtraction keeps exp in range; it cancels in the
// ratio, so the result still equals exp(a_j/T)/sum_k exp(a_k/T).
inline Tensor softmax_with_temperature(const Tensor& logits,
                                       double temperature) {
    if (!(temperature > 0.0) || !std::isfinite(temperature)) {
        throw DomainError("softmax temperature must be positive and finite, "
                          "got " + std::to_string(temperature));
    }
    if (logits.rank() != 2 || logits.shape[1] < 2) {
        throw ShapeError("softmax expects [batch, classes>=2] logits, got " +
                         shape_to_string(logits.shape));
    }
    const long n = logits.shape[0], k = logits.shape[1];
    Tensor probs({n, k});
    for (long i = 0; i < n; ++i) {
        const double* row = logits.data.data() + i * k;
        double* out = probs.data.data() + i * k;
        double m = row[0];
        for (long j = 1; j < k; ++j) m = std::max(m, row[j]);
        double sum = 0.0;
        for (long j = 0; j < k; ++j) {
            out[j] = std::exp((row[j] - m) / temperature);
            sum += out[j];
        }
        for (long j = 0; j < k; ++j) out[j] /= sum;
    }
    return probs;
}

namespace detail {

// cols[row, (ky*kw + kx)*C + c] = padded input value under the kernel at
// output position row = oy*outW + ox. Matches the row-major [kh,kw,Cin,Cout]
// weight layout, so conv forward is one matmul per sample.
inline void im2col(const Tensor& x, long sample, long kh, long kw, long stride,
                   long pad, long out_h, long out_w, Tensor& cols) {
    const long h = x.shape[1], w = x.shape[2], c = x.shape[3];
    const double* src = x.data.data() + sample * h * w * c;
    double* dst = cols.data.data();
    for (long oy = 0; oy < out_h; ++oy) {
        for (long ox = 0; ox < out_w; ++ox) {
            for (long ky = 0; ky < kh; ++ky) {
                const long iy = oy * stride - pad + ky;
                for (long kx = 0; kx < kw; ++kx) {
                    const long ix = ox * stride - pad + kx;
                    if (iy < 0 || iy >= h || ix < 0 || ix >= w) {
                        for (long cc = 0; cc < c; ++cc) *dst++ = 0.0;
                    } else {
                        const double* px = src + (iy * w + ix) * c;
                        for (long cc = 0; cc < c; ++cc) *dst++ = px[cc];
                    }
                }
            }
        }
    }
}

// Scatter-add of column gradients back to input positions (the adjoint of
// im2col).
inline void col2im_add(const Tensor& cols, long sample, long kh, long kw,
                       long stride, long pad, long out_h, long out_w,
                       Tensor& dx) {
    const long h = dx.shape[1], w = dx.shape[2], c = dx.shape[3];
    double* dst = dx.data.data() + sample * h * w * c;
    const double* src = cols.data.data();
    for (long oy = 0; oy < out_h; ++oy) {
        for (long ox = 0; ox < out_w; ++ox) {
            for (long ky = 0; ky < kh; ++ky) {
                const long iy = oy * stride - pad + ky;
                for (long kx = 0; kx < kw; ++kx) {
                    const long ix = ox * stride - pad + kx;
                    if (iy < 0 || iy >= h || ix < 0 || ix >= w) {
                        src += c;
                    } else {
                        double* px = dst + (iy * w + ix) * c;
                        for (long cc = 0; cc < c; ++cc) px[cc] += *src++;
                    }
                }
            }
        }
    }
}

// C += A^T * B without materializing the transpose.
inline void matmul_at_b_accum(const Tensor& a, const Tensor& b, Tensor& c) {
    const long m = a.shape[0], k = a.shape[1], n = b.shape[1];
    const double* pa = a.data.data();
    const double* pb = b.data.data();
    double* pc = c.data.data();
    for (long i = 0; i < m; ++i) {
        const double* arow = pa + i * k;
        const double* brow = pb + i * n;
        for (long p = 0; p < k; ++p) {
            const double av = arow[p];
            if (av == 0.0) continue;
            double* crow = pc + p * n;
            for (long j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

// C = A * B^T.
inline Tensor matmul_b_t(const Tensor& a, const Tensor& b) {
    const long m = a.shape[0], k = a.shape[1], n = b.shape[0];
    Tensor c({m, n});
    const double* pa = a.data.data();
    const double* pb = b.data.data();
    double* pc = c.data.data();
    for (long i = 0; i < m; ++i) {
        const double* arow = pa + i * k;
        for (long j = 0; j < n; ++j) {
            const double* brow = pb + j * k;
            double s = 0.0;
            for (long p = 0; p < k; ++p) s += arow[p] * brow[p];
            pc[i * n + j] = s;
        }
    }
    return c;
}

inline Tensor conv2d_forward(const LayerSpec& spec, LayerState& state,
                             const Tensor& input, bool cache) {
    const Shape out_shape = layer_output_shape(spec, input.shape);
    const long n = input.shape[0];
    const long oh = out_shape[1], ow = out_shape[2];
    const long kcols = spec.kernel_h * spec.kernel_w * spec.in_channels;
    const Tensor& weight = state.params.at("weight");
    const Tensor wmat = weight.reshaped({kcols, spec.out_channels});
    const Tensor& bias = state.params.at("bias");

    Tensor out(out_shape);
    Tensor cols({oh * ow, kcols});
    for (long s = 0; s < n; ++s) {
        im2col(input, s, spec.kernel_h, spec.kernel_w, spec.stride,
               spec.padding, oh, ow, cols);
        Tensor y = matmul(cols, wmat);
        double* dst = out.data.data() + s * oh * ow * spec.out_channels;
        const double* src = y.data.data();
        for (long r = 0; r < oh * ow; ++r) {
            for (long c = 0; c < spec.out_channels; ++c) {
                dst[r * spec.out_channels + c] =
                    src[r * spec.out_channels + c] + bias.data[c];
            }
        }
    }
    if (cache) {
        state.cached_input = input;
        state.has_cache = true;
    }
    return out;
}

struct LayerGradsImpl {
    Tensor input_grad;
    std::map<std::string, Tensor> param_grads;
};

inline LayerGradsImpl conv2d_backward(const LayerSpec& spec, LayerState& state,
                                      const Tensor& upstream) {
    const Tensor& input = state.cached_input;
    const Shape out_shape = layer_output_shape(spec, input.shape);
    if (upstream.shape != out_shape) {
        throw ShapeError("conv2d backward: upstream " +
                         shape_to_string(upstream.shape) + " does not match " +
                         shape_to_string(out_shape));
    }
    const long n = input.shape[0];
    const long oh = out_shape[1], ow = out_shape[2];
    const long kcols = spec.kernel_h * spec.kernel_w * spec.in_channels;
    const Tensor& weight = state.params.at("weight");
    const Tensor wmat = weight.reshaped({kcols, spec.out_channels});

    Tensor dwmat({kcols, spec.out_channels});
    Tensor dbias({spec.out_channels});
    Tensor dinput(input.shape);
    Tensor cols({oh * ow, kcols});
    for (long s = 0; s < n; ++s) {
        Tensor dy = Tensor::from_data(
            {oh * ow, spec.out_channels},
            std::vector<double>(
                upstream.data.begin() + s * oh * ow * spec.out_channels,
                upstream.data.begin() + (s + 1) * oh * ow * spec.out_channels));
        im2col(input, s, spec.kernel_h, spec.kernel_w, spec.stride,
               spec.padding, oh, ow, cols);
        matmul_at_b_accum(cols, dy, dwmat);
        for (long r = 0; r < oh * ow; ++r) {
            for (long c = 0; c < spec.out_channels; ++c) {
                dbias.data[c] += dy.data[r * spec.out_channels + c];
            }
        }
        Tensor dcols = matmul_b_t(dy, wmat);
        col2im_add(dcols, s, spec.kernel_h, spec.kernel_w, spec.stride,
                   spec.padding, oh, ow, dinput);
    }
    LayerGradsImpl g;
    g.input_grad = std::move(dinput);
    g.param_grads["weight"] = dwmat.reshaped(weight.shape);
    g.param_grads["bias"] = std::move(dbias);
    return g;
}

}  // namespace detail

struct LayerGrads {
    Tensor input_grad;
    std::map<std::string, Tensor> param_grads;
};

inline Tensor layer_forward(const LayerSpec& spec, LayerState& state,
                            const Tensor& input, Mode mode,
                            RngState* rng = nullptr) {
    const bool cache = (mode == Mode::train);
    switch (spec.kind) {
        case LayerKind::conv2d:
            return detail::conv2d_forward(spec, state, input, cache);
        case LayerKind::maxpool2d: {
            const Shape out_shape = layer_output_shape(spec, input.shape);
            const long n = input.shape[0], h = input.shape[1],
                       w = input.shape[2], c = input.shape[3];
            const long oh = out_shape[1], ow = out_shape[2];
            Tensor out(out_shape);
            if (cache) {
                state.cached_argmax.assign(
                    static_cast<std::size_t>(n * oh * ow * c), 0);
            }
            for (long s = 0; s < n; ++s) {
                const double* src = input.data.data() + s * h * w * c;
                for (long oy = 0; oy < oh; ++oy) {
                    for (long ox = 0; ox < ow; ++ox) {
                        for (long cc = 0; cc < c; ++cc) {
                            double best = -std::numeric_limits<double>::infinity();
                            long best_ix = 0;
                            for (long py = 0; py < spec.pool_h; ++py) {
                                for (long px = 0; px < spec.pool_w; ++px) {
                                    const long iy = oy * spec.pool_stride + py;
                                    const long ix = ox * spec.pool_stride + px;
                                    const long flat = (iy * w + ix) * c + cc;
                                    // ties go to the first element in scan
                                    // order, so backward routing is stable
                                    if (src[flat] > best) {
                                        best = src[flat];
                                        best_ix = flat;
                                    }
                                }
                            }
                            const long o = ((s * oh + oy) * ow + ox) * c + cc;
                            out.data[o] = best;
                            if (cache) {
                                state.cached_argmax[o] = s * h * w * c + best_ix;
                            }
                        }
                    }
                }
            }
            if (cache) {
                state.cached_input = input;
                state.has_cache = true;
            }
            return out;
        }
        case LayerKind::dense: {
            layer_output_shape(spec, input.shape);
            Tensor out = matmul(input, state.params.at("weight"));
            const Tensor& bias = state.params.at("bias");
            for (long i = 0; i < out.shape[0]; ++i) {
                for (long j = 0; j < out.shape[1]; ++j) {
                    out.data[i * out.shape[1] + j] += bias.data[j];
                }
            }
            if (cache) {
                state.cached_input = input;
                state.has_cache = true;
            }
            return out;
        }
        case LayerKind::relu: {
            Tensor out = max_with(input, 0.0);
            if (cache) {
                state.cached_input = input;
                state.has_cache = true;
            }
            return out;
        }
        case LayerKind::dropout: {
            if (mode == Mode::eval) return input;
            const bool reuse = state.freeze_dropout_mask &&
                               state.cached_mask.same_shape(input);
            if (!reuse) {
                if (rng == nullptr) {
                    throw UsageError("dropout forward in train mode needs an "
                                     "rng");
                }
                // inverted dropout: survivors are scaled by 1/(1-rate) here
                // so eval-mode forward is the identity
                Tensor mask(input.shape);
                const double keep_scale = 1.0 / (1.0 - spec.rate);
                for (double& m : mask.data) {
                    m = (rng->next_double() < spec.rate) ? 0.0 : keep_scale;
                }
                state.cached_mask = std::move(mask);
            }
            Tensor out = mul(input, state.cached_mask);
            if (cache) {
                state.cached_input = input;
                state.has_cache = true;
            }
            return out;
        }
        case LayerKind::flatten: {
            const Shape out_shape = layer_output_shape(spec, input.shape);
            Tensor out = input.reshaped(out_shape);
            if (cache) {
                state.cached_input = input;
                state.has_cache = true;
            }
            return out;
        }
        case LayerKind::softmax_t: {
            layer_output_shape(spec, input.shape);
            Tensor out = softmax_with_temperature(input, spec.temperature);
            if (cache) {
                state.cached_output = out;
                state.has_cache = true;
            }
            return out;
        }
        case LayerKind::residual_block: {
            layer_output_shape(spec, input.shape);
            const LayerSpec conv =
                conv2d_spec(spec.kernel_h, spec.kernel_w, spec.channels,
                            spec.channels, 1, spec.padding);
            Tensor pre1 = detail::conv2d_forward(conv, state.children[0],
                                                 input, cache);
            Tensor a1 = max_with(pre1, 0.0);
            Tensor pre2 =
                detail::conv2d_forward(conv, state.children[1], a1, cache);
            Tensor pre_out = add(pre2, input);
            Tensor out = max_with(pre_out, 0.0);
            if (cache) {
                state.cached_pre1 = std::move(pre1);
                state.cached_pre2 = std::move(pre_out);
                state.has_cache = true;
            }
            return out;
        }
        case LayerKind::global_avg_pool: {
            const Shape out_shape = layer_output_shape(spec, input.shape);
            const long n = input.shape[0], h = input.shape[1],
                       w = input.shape[2], c = input.shape[3];
            Tensor out(out_shape);
            for (long s = 0; s < n; ++s) {
                for (long iy = 0; iy < h; ++iy) {
                    for (long ix = 0; ix < w; ++ix) {
                        const double* px =
                            input.data.data() + ((s * h + iy) * w + ix) * c;
                        for (long cc = 0; cc < c; ++cc) {
                            out.data[s * c + cc] += px[cc];
                        }
                    }
                }
            }
            const double inv = 1.0 / static_cast<double>(h * w);
            for (double& x : out.data) x *= inv;
            if (cache) {
                state.cached_input = input;
                state.has_cache = true;
            }
            return out;
        }
    }
    throw UsageError("unknown layer kind");
}

// Flattens a state's parameter tensors (including residual children, whose
// names gain a "conv1."/"conv2." prefix to match layer_backward's grads).
inline void collect_layer_params(LayerState& state, const std::string& prefix,
                                 std::vector<std::pair<std::string, Tensor*>>& out) {
    for (auto& [name, tensor] : state.params) {
        out.emplace_back(prefix + name, &tensor);
    }
    for (std::size_t i = 0; i < state.children.size(); ++i) {
        collect_layer_params(state.children[i],
                             prefix + "conv" + std::to_string(i + 1) + ".",
                             out);
    }
}

inline LayerGrads layer_backward(const LayerSpec& spec, LayerState& state,
                                 const Tensor& upstream) {
    if (!state.has_cache) {
        throw UsageError(std::string(layer_kind_name(spec.kind)) +
                         ": backward before a cached forward");
    }
    LayerGrads g;
    switch (spec.kind) {
        case LayerKind::conv2d: {
            auto impl = detail::conv2d_backward(spec, state, upstream);
            g.input_grad = std::move(impl.input_grad);
            g.param_grads = std::move(impl.param_grads);
            return g;
        }
        case LayerKind::maxpool2d: {
            const Tensor& input = state.cached_input;
            if (upstream.numel() !=
                static_cast<long>(state.cached_argmax.size())) {
                throw ShapeError("maxpool backward: upstream " +
                                 shape_to_string(upstream.shape) +
                                 " does not match cached forward");
            }
            g.input_grad = Tensor(input.shape);
            for (std::size_t o = 0; o < state.cached_argmax.size(); ++o) {
                g.input_grad.data[static_cast<std::size_t>(
                    state.cached_argmax[o])] += upstream.data[o];
            }
            return g;
        }
        case LayerKind::dense: {
            const Tensor& input = state.cached_input;
            const Tensor& weight = state.params.at("weight");
            if (upstream.rank() != 2 || upstream.shape[0] != input.shape[0] ||
                upstream.shape[1] != spec.out_features) {
                throw ShapeError("dense backward: upstream " +
                                 shape_to_string(upstream.shape) +
                                 " does not match cached forward");
            }
            Tensor dw(weight.shape);
            detail::matmul_at_b_accum(input, upstream, dw);
            Tensor db({spec.out_features});
            for (long i = 0; i < upstream.shape[0]; ++i) {
                for (long j = 0; j < spec.out_features; ++j) {
                    db.data[j] += upstream.data[i * spec.out_features + j];
                }
            }
            g.input_grad = detail::matmul_b_t(upstream, weight);
            g.param_grads["weight"] = std::move(dw);
            g.param_grads["bias"] = std::move(db);
            return g;
        }
        case LayerKind::relu: {
            const Tensor& input = state.cached_input;
            check_same_shape(upstream, input, "relu backward");
            g.input_grad = upstream;
            for (std::size_t i = 0; i < input.data.size(); ++i) {
                if (input.data[i] <= 0.0) g.input_grad.data[i] = 0.0;
            }
            return g;
        }
        case LayerKind::dropout: {
            g.input_grad = mul(upstream, state.cached_mask);
            return g;
        }
        case LayerKind::flatten: {
            g.input_grad = upstream.reshaped(state.cached_input.shape);
            return g;
        }
        case LayerKind::softmax_t: {
            // standalone Jacobian product; the training losses use the fused
            // softmax+cross-entropy gradient instead (see loss.hpp)
            const Tensor& p = state.cached_output;
            check_same_shape(upstream, p, "softmaxT backward");
            const long n = p.shape[0], k = p.shape[1];
            g.input_grad = Tensor(p.shape);
            for (long i = 0; i < n; ++i) {
                const double* pr = p.data.data() + i * k;
                const double* gr = upstream.data.data() + i * k;
                double dot = 0.0;
                for (long j = 0; j < k; ++j) dot += gr[j] * pr[j];
                for (long j = 0; j < k; ++j) {
                    g.input_grad.data[i * k + j] =
                        pr[j] * (gr[j] - dot) / spec.temperature;
                }
            }
            return g;
        }
        case LayerKind::residual_block: {
            const LayerSpec conv =
                conv2d_spec(spec.kernel_h, spec.kernel_w, spec.channels,
                            spec.channels, 1, spec.padding);
            check_same_shape(upstream, state.cached_pre2,
                             "residual backward");
            Tensor gate2 = upstream;
            for (std::size_t i = 0; i < gate2.data.size(); ++i) {
                if (state.cached_pre2.data[i] <= 0.0) gate2.data[i] = 0.0;
            }
            auto g2 = detail::conv2d_backward(conv, state.children[1], gate2);
            Tensor d_pre1 = std::move(g2.input_grad);
            for (std::size_t i = 0; i < d_pre1.data.size(); ++i) {
                if (state.cached_pre1.data[i] <= 0.0) d_pre1.data[i] = 0.0;
            }
            auto g1 = detail::conv2d_backward(conv, state.children[0], d_pre1);
            g.input_grad = add(g1.input_grad, gate2);
            for (auto& [name, grad] : g1.param_grads) {
                g.param_grads["conv1." + name] = std::move(grad);
            }
            for (auto& [name, grad] : g2.param_grads) {
                g.param_grads["conv2." + name] = std::move(grad);
            }
            return g;
        }
        case LayerKind::global_avg_pool: {
            const Tensor& input = state.cached_input;
            const long n = input.shape[0], h = input.shape[1],
                       w = input.shape[2], c = input.shape[3];
            const double inv = 1.0 / static_cast<double>(h * w);
            g.input_grad = Tensor(input.shape);
            for (long s = 0; s < n; ++s) {
                for (long iy = 0; iy < h; ++iy) {
                    for (long ix = 0; ix < w; ++ix) {
                        double* px = g.input_grad.data.data() +
                                     ((s * h + iy) * w + ix) * c;
                        for (long cc = 0; cc < c; ++cc) {
                            px[cc] = upstream.data[s * c + cc] * inv;
                        }
                    }
                }
            }
            return g;
        }
    }
    throw UsageError("unknown layer kind");
}

}  // namespace dsnet
