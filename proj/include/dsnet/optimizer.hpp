#pragma once

#include <cmath>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "dsnet/error.hpp"
#include "dsnet/tensor.hpp"

namespace dsnet {

using NamedParams = std::vector<std::pair<std::string, Tensor*>>;

struct AdamState {
    double lr = 0.001;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    long step = 0;
    std::map<std::string, Tensor> m;  // first moments, keyed like the params
    std::map<std::string, Tensor> v;  // second moments
};

// One bias-corrected Adam update over every named parameter:
//   m <- b1*m + (1-b1)*g,  v <- b2*v + (1-b2)*g^2
//   theta <- theta - lr * (m/(1-b1^t)) / (sqrt(v/(1-b2^t)) + eps)
// Moments are created lazily (zeros) the first time a parameter is seen.
inline void adam_step(const NamedParams& params,
                      const std::map<std::string, Tensor>& grads,
                      AdamState& state) {
    state.step += 1;
    const double bc1 = 1.0 - std::pow(state.beta1, state.step);
    const double bc2 = 1.0 - std::pow(state.beta2, state.step);
    for (const auto& [name, param] : params) {
        auto it = grads.find(name);
        if (it == grads.end()) {
            throw UsageError("adam_step: no gradient for parameter " + name);
        }
        const Tensor& g = it->second;
        if (!g.same_shape(*param)) {
            throw ShapeError("adam_step: gradient shape " +
                             shape_to_string(g.shape) + " does not match " +
                             name + " " + shape_to_string(param->shape));
        }
        Tensor& m = state.m.try_emplace(name, Tensor(param->shape))
                        .first->second;
        Tensor& v = state.v.try_emplace(name, Tensor(param->shape))
                        .first->second;
        if (!m.same_shape(*param) || !v.same_shape(*param)) {
            throw ShapeError("adam_step: stale moment shape for " + name);
        }
        for (std::size_t i = 0; i < param->data.size(); ++i) {
            const double gi = g.data[i];
            m.data[i] = state.beta1 * m.data[i] + (1.0 - state.beta1) * gi;
            v.data[i] = state.beta2 * v.data[i] + (1.0 - state.beta2) * gi * gi;
            const double m_hat = m.data[i] / bc1;
            const double v_hat = v.data[i] / bc2;
            param->data[i] -= state.lr * m_hat / (std::sqrt(v_hat) + state.eps);
        }
    }
}

}  // namespace dsnet
