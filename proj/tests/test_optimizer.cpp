#include <gtest/gtest.h>

#include <cmath>

#include "dsnet/optimizer.hpp"

using namespace dsnet;

namespace {

struct Single {
    Tensor theta;
    AdamState adam;
    NamedParams params;

    explicit Single(double value) : theta(Tensor::full({1}, value)) {
        params.emplace_back("theta", &theta);
    }

    void step(double grad) {
        std::map<std::string, Tensor> grads;
        grads["theta"] = Tensor::full({1}, grad);
        adam_step(params, grads, adam);
    }
};

}  // namespace

TEST(Adam, ZeroGradientLeavesParamsUnchanged) {
    Single s(1.0);
    s.step(0.0);
    EXPECT_EQ(s.theta.data[0], 1.0);
    EXPECT_EQ(s.adam.step, 1);
}

TEST(Adam, FirstStepBiasCorrectionCollapses) {
    // theta=1, g=4, lr=0.001: update = lr * 4/(4 + eps) ~ 0.001
    Single s(1.0);
    s.step(4.0);
    EXPECT_NEAR(s.theta.data[0], 1.0 - 0.001 * (4.0 / (4.0 + 1e-8)), 1e-15);
    EXPECT_NEAR(s.theta.data[0], 0.999, 1e-9);
}

TEST(Adam, FirstStepMagnitudeIsScaleInvariant) {
    for (double c : {0.1, 10.0}) {
        Single s(0.0);
        s.step(c);
        EXPECT_NEAR(std::abs(s.theta.data[0]), 0.001, 1e-6);
    }
}

TEST(Adam, FirstStepDirectionOpposesGradient) {
    Single up(0.0);
    up.step(3.0);
    EXPECT_LT(up.theta.data[0], 0.0);
    Single down(0.0);
    down.step(-0.02);
    EXPECT_GT(down.theta.data[0], 0.0);
}

TEST(Adam, MomentShapesMirrorParams) {
    Tensor w = Tensor::zeros({2, 3});
    NamedParams params{{"w", &w}};
    AdamState adam;
    std::map<std::string, Tensor> grads;
    grads["w"] = Tensor::full({2, 3}, 0.5);
    adam_step(params, grads, adam);
    EXPECT_EQ(adam.m.at("w").shape, w.shape);
    EXPECT_EQ(adam.v.at("w").shape, w.shape);
    for (double v : adam.v.at("w").data) EXPECT_GE(v, 0.0);
}

TEST(Adam, GradientShapeMismatch) {
    Tensor w = Tensor::zeros({2});
    NamedParams params{{"w", &w}};
    AdamState adam;
    std::map<std::string, Tensor> grads;
    grads["w"] = Tensor::zeros({3});
    EXPECT_THROW(adam_step(params, grads, adam), ShapeError);
}

TEST(Adam, MissingGradient) {
    Tensor w = Tensor::zeros({2});
    NamedParams params{{"w", &w}};
    AdamState adam;
    std::map<std::string, Tensor> grads;
    EXPECT_THROW(adam_step(params, grads, adam), UsageError);
}

TEST(Adam, ConvergesOnQuadratic) {
    // minimize (theta-3)^2; gradient 2(theta-3)
    Single s(0.0);
    s.adam.lr = 0.05;
    for (int i = 0; i < 2000; ++i) {
        s.step(2.0 * (s.theta.data[0] - 3.0));
    }
    EXPECT_NEAR(s.theta.data[0], 3.0, 1e-3);
}
