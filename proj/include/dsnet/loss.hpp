#pragma once

#include <cmath>
#include <string>

#include "dsnet/error.hpp"
#include "dsnet/layers.hpp"
#include "dsnet/tensor.hpp"

namespace dsnet {

// Probabilities are clamped to at least this value inside logs so a
// saturated prediction costs a large finite loss instead of infinity.
// Golden loss values in the tests assume exactly this constant.
inline constexpr double kLogFloor = 1e-12;

struct KDLossConfig {
    double alpha = 0.5;
    double temperature = 10.0;
    // Scale the soft-term gradient by T^2 (the returned loss value is never
    // scaled). With the flag on, the gradient is deliberately the derivative
    // of T^2 * L_soft, which keeps the soft term's pull on the student
    // roughly independent of the chosen temperature.
    bool t_squared_scaling = true;
    // The hard term defaults to unsoftened (T=1) student probabilities;
    // setting this trains the hard term on the T-softened ones instead.
    bool hard_term_uses_temperature = false;

    void validate() const {
        if (!(alpha >= 0.0 && alpha <= 1.0)) {
            throw DomainError("distillation alpha must lie in [0,1], got " +
                              std::to_string(alpha));
        }
        if (!(temperature > 0.0)) {
            throw DomainError("distillation temperature must be > 0, got " +
                              std::to_string(temperature));
        }
    }
};

struct LossResult {
    double loss = 0.0;
    Tensor grad;  // with respect to the student logits
};

inline void check_prob_shape(const Tensor& t, const char* what) {
    if (t.rank() != 2 || t.shape[1] < 2) {
        throw ShapeError(std::string(what) +
                         " must be [batch, classes>=2], got " +
                         shape_to_string(t.shape));
    }
}

inline void check_one_hot(const Tensor& labels) {
    check_prob_shape(labels, "labels");
    const long n = labels.shape[0], k = labels.shape[1];
    for (long i = 0; i < n; ++i) {
        double sum = 0.0;
        for (long j = 0; j < k; ++j) {
            const double v = labels.at(i, j);
            if (v != 0.0 && v != 1.0) {
                throw DomainError("labels must be one-hot (entries 0 or 1)");
            }
            sum += v;
        }
        if (sum != 1.0) {
            throw DomainError("labels must have exactly one 1 per row");
        }
    }
}

// Mean over the batch of -sum_j y_j ln(p_j). The gradient is the fused
// softmax(T=1) + cross-entropy form (p - y)/batch, valid when `probs` came
// out of a T=1 softmax over the logits being trained.
inline LossResult cross_entropy(const Tensor& probs, const Tensor& labels) {
    check_prob_shape(probs, "probabilities");
    check_same_shape(probs, labels, "cross_entropy");
    check_one_hot(labels);
    const long n = probs.shape[0], k = probs.shape[1];
    LossResult r;
    r.grad = Tensor(probs.shape);
    const double inv_batch = 1.0 / static_cast<double>(n);
    for (long i = 0; i < n; ++i) {
        for (long j = 0; j < k; ++j) {
            const double p = probs.at(i, j);
            const double y = labels.at(i, j);
            if (y != 0.0) {
                r.loss -= y * std::log(std::max(p, kLogFloor));
            }
            r.grad.at(i, j) = (p - y) * inv_batch;
        }
    }
    r.loss *= inv_batch;
    return r;
}

// Cross-entropy of the student's softened distribution against the
// teacher's, both produced at the same temperature. The fused gradient with
// respect to the student logits is (p_s - p_t)/(T*batch); with
// t_squared_scaling it becomes T*(p_s - p_t)/batch.
inline LossResult soft_cross_entropy(const Tensor& student_probs,
                                     const Tensor& teacher_probs,
                                     double temperature,
                                     bool t_squared_scaling) {
    check_prob_shape(student_probs, "student probabilities");
    check_same_shape(student_probs, teacher_probs, "soft_cross_entropy");
    if (!(temperature > 0.0)) {
        throw DomainError("temperature must be > 0");
    }
    const long n = student_probs.shape[0], k = student_probs.shape[1];
    LossResult r;
    r.grad = Tensor(student_probs.shape);
    const double inv_batch = 1.0 / static_cast<double>(n);
    double grad_scale = inv_batch / temperature;
    if (t_squared_scaling) grad_scale *= temperature * temperature;
    for (long i = 0; i < n; ++i) {
        for (long j = 0; j < k; ++j) {
            const double ps = student_probs.at(i, j);
            const double pt = teacher_probs.at(i, j);
            r.loss -= pt * std::log(std::max(ps, kLogFloor));
            r.grad.at(i, j) = (ps - pt) * grad_scale;
        }
    }
    r.loss *= inv_batch;
    return r;
}

// Weighted distillation objective:
//   loss = alpha * L_hard(softmax(a_s, 1), Y)
//        + (1 - alpha) * L_soft(softmax(a_s, T), softmax(a_t, T))
// Teacher logits are treated as constants. At alpha == 1 this reduces
// exactly to plain hard cross-entropy and never touches the teacher; at
// alpha == 0 it is exactly the soft term.
inline LossResult kd_loss(const Tensor& student_logits,
                          const Tensor& teacher_logits, const Tensor& labels,
                          const KDLossConfig& cfg) {
    cfg.validate();
    check_prob_shape(student_logits, "student logits");
    if (cfg.alpha < 1.0) {
        check_same_shape(student_logits, teacher_logits, "kd_loss");
    }
    check_same_shape(student_logits, labels, "kd_loss labels");

    LossResult hard;
    if (cfg.alpha > 0.0) {
        if (cfg.hard_term_uses_temperature) {
            Tensor pt = softmax_with_temperature(student_logits,
                                                 cfg.temperature);
            hard = cross_entropy(pt, labels);
            hard.grad = scale(hard.grad, 1.0 / cfg.temperature);
        } else {
            hard = cross_entropy(softmax_with_temperature(student_logits, 1.0),
                                 labels);
        }
    }

    LossResult soft;
    if (cfg.alpha < 1.0) {
        soft = soft_cross_entropy(
            softmax_with_temperature(student_logits, cfg.temperature),
            softmax_with_temperature(teacher_logits, cfg.temperature),
            cfg.temperature, cfg.t_squared_scaling);
    }

    LossResult r;
    if (cfg.alpha == 1.0) {
        return hard;
    }
    if (cfg.alpha == 0.0) {
        return soft;
    }
    r.loss = cfg.alpha * hard.loss + (1.0 - cfg.alpha) * soft.loss;
    r.grad = add(scale(hard.grad, cfg.alpha),
                 scale(soft.grad, 1.0 - cfg.alpha));
    return r;
}

}  // namespace dsnet
