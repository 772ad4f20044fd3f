#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "dsnet/layers.hpp"
#include "dsnet/rng.hpp"
#include "dsnet/tensor.hpp"

namespace dsnet {

struct CheckReport {
    enum class Status { pass, fail, inconclusive };
    Status status = Status::fail;
    double max_rel_error = 0.0;
    long attempts = 0;
    std::string worst_coordinate;

    bool passed() const { return status == Status::pass; }
};

namespace detail {

// Distance to the nearest non-differentiable point of the sampled forward.
// Central differences near a ReLU kink or a maxpool tie measure a different
// one-sided slope than the analytic backward, so such draws are rejected.
inline double min_kink_distance(const LayerSpec& spec, const LayerState& state,
                                const Tensor& input) {
    double d = std::numeric_limits<double>::infinity();
    switch (spec.kind) {
        case LayerKind::relu:
            for (double x : input.data) d = std::min(d, std::abs(x));
            break;
        case LayerKind::maxpool2d: {
            const long n = input.shape[0], h = input.shape[1],
                       w = input.shape[2], c = input.shape[3];
            const long oh = (h - spec.pool_h) / spec.pool_stride + 1;
            const long ow = (w - spec.pool_w) / spec.pool_stride + 1;
            for (long s = 0; s < n; ++s) {
                for (long oy = 0; oy < oh; ++oy) {
                    for (long ox = 0; ox < ow; ++ox) {
                        for (long cc = 0; cc < c; ++cc) {
                            double best = -std::numeric_limits<double>::infinity();
                            double second = best;
                            for (long py = 0; py < spec.pool_h; ++py) {
                                for (long px = 0; px < spec.pool_w; ++px) {
                                    const long iy = oy * spec.pool_stride + py;
                                    const long ix = ox * spec.pool_stride + px;
                                    const double v = input.at(s, iy, ix, cc);
                                    if (v > best) {
                                        second = best;
                                        best = v;
                                    } else if (v > second) {
                                        second = v;
                                    }
                                }
                            }
                            if (spec.pool_h * spec.pool_w > 1) {
                                d = std::min(d, best - second);
                            }
                        }
                    }
                }
            }
            break;
        }
        case LayerKind::residual_block:
            for (double x : state.cached_pre1.data) {
                d = std::min(d, std::abs(x));
            }
            for (double x : state.cached_pre2.data) {
                d = std::min(d, std::abs(x));
            }
            break;
        default:
            break;
    }
    return d;
}

}  // namespace detail

// Compares the analytic backward of one layer against central finite
// differences of a random scalar projection of its output. Retries with a
// re-seeded input (up to `retry_limit`) when the draw lands within
// `kink_margin` of a non-differentiable point; exhausting the retries yields
// an inconclusive report rather than a spurious pass or fail.
inline CheckReport grad_check(const LayerSpec& spec, const Shape& input_shape,
                              double h, double tol, std::uint64_t seed,
                              long retry_limit = 3,
                              double kink_margin = 1e-3) {
    if (!(h > 0.0)) throw DomainError("finite-difference step must be > 0");
    if (!(tol > 0.0)) throw DomainError("tolerance must be > 0");

    CheckReport report;
    for (long attempt = 0; attempt < retry_limit; ++attempt) {
        report.attempts = attempt + 1;
        RngState rng(derive_seed(seed, "grad-check", static_cast<std::uint64_t>(attempt)));
        LayerState state = init_layer_state(spec, rng);
        state.freeze_dropout_mask = true;
        Tensor input = Tensor::normal(input_shape, 0.0, 1.0, rng);
        const Shape out_shape = layer_output_shape(spec, input_shape);
        Tensor projection = Tensor::normal(out_shape, 0.0, 1.0, rng);

        // first forward also samples (and freezes) any dropout mask
        Tensor out = layer_forward(spec, state, input, Mode::train, &rng);
        if (detail::min_kink_distance(spec, state, input) < kink_margin) {
            continue;
        }

        LayerGrads analytic = layer_backward(spec, state, projection);

        auto loss_at = [&]() {
            Tensor y = layer_forward(spec, state, input, Mode::train, nullptr);
            double s = 0.0;
            for (long i = 0; i < y.numel(); ++i) {
                s += projection.data[static_cast<std::size_t>(i)] *
                     y.data[static_cast<std::size_t>(i)];
            }
            return s;
        };

        std::vector<std::pair<std::string, Tensor*>> coords;
        coords.emplace_back("input", &input);
        collect_layer_params(state, "", coords);

        report.max_rel_error = 0.0;
        report.worst_coordinate.clear();
        for (auto& [name, tensor] : coords) {
            const Tensor* grad = nullptr;
            if (name == "input") {
                grad = &analytic.input_grad;
            } else {
                auto it = analytic.param_grads.find(name);
                if (it == analytic.param_grads.end()) {
                    throw UsageError("backward produced no gradient for " +
                                     name);
                }
                grad = &it->second;
            }
            for (long i = 0; i < tensor->numel(); ++i) {
                double& x = tensor->data[static_cast<std::size_t>(i)];
                const double saved = x;
                x = saved + h;
                const double lp = loss_at();
                x = saved - h;
                const double lm = loss_at();
                x = saved;
                const double fd = (lp - lm) / (2.0 * h);
                const double ga = grad->data[static_cast<std::size_t>(i)];
                const double rel =
                    std::abs(ga - fd) / (std::abs(ga) + std::abs(fd) + 1e-12);
                if (rel > report.max_rel_error) {
                    report.max_rel_error = rel;
                    report.worst_coordinate =
                        name + "[" + std::to_string(i) + "]";
                }
            }
        }
        report.status = report.max_rel_error <= tol
                            ? CheckReport::Status::pass
                            : CheckReport::Status::fail;
        return report;
    }
    report.status = CheckReport::Status::inconclusive;
    return report;
}

}  // namespace dsnet
