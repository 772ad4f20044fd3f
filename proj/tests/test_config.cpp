#include <gtest/gtest.h>

#include "dsnet/config.hpp"

using namespace dsnet;

TEST(Config, DefaultsAreValid) {
    ExperimentConfig cfg;
    EXPECT_NO_THROW(cfg.validate());
    EXPECT_EQ(cfg.batch_size, 64);
    EXPECT_EQ(cfg.student_epochs, 20);
    EXPECT_EQ(cfg.teacher_epochs, 15);
    EXPECT_DOUBLE_EQ(cfg.lr, 0.001);
    EXPECT_DOUBLE_EQ(cfg.distill.temperature, 10.0);
    EXPECT_DOUBLE_EQ(cfg.distill.alpha, 0.5);
    EXPECT_TRUE(cfg.distill.t_squared_scaling);
    EXPECT_FALSE(cfg.distill.hard_term_uses_temperature);
}

TEST(Config, ParseRoundTrip) {
    ExperimentConfig cfg;
    cfg.seed = 99;
    cfg.batch_size = 32;
    cfg.distill.temperature = 7.5;
    cfg.distill.alpha = 0.3;
    cfg.student_conv_widths = {4, 8, 12};
    cfg.dataset_kind = "directory";
    cfg.dataset_dir = "/tmp/lesions";
    cfg.fail_on_undecodable = false;
    ExperimentConfig back = parse_config_text(config_to_text(cfg));
    EXPECT_EQ(back.seed, 99u);
    EXPECT_EQ(back.batch_size, 32);
    EXPECT_DOUBLE_EQ(back.distill.temperature, 7.5);
    EXPECT_DOUBLE_EQ(back.distill.alpha, 0.3);
    EXPECT_EQ(back.student_conv_widths, (std::vector<long>{4, 8, 12}));
    EXPECT_EQ(back.dataset_kind, "directory");
    EXPECT_EQ(back.dataset_dir, "/tmp/lesions");
    EXPECT_FALSE(back.fail_on_undecodable);
    EXPECT_EQ(config_to_text(back), config_to_text(cfg));
}

TEST(Config, CommentsAndBlanksIgnored) {
    ExperimentConfig cfg = parse_config_text(
        "# experiment\n"
        "\n"
        "  seed=5\n"
        "batch_size=8   \n");
    EXPECT_EQ(cfg.seed, 5u);
    EXPECT_EQ(cfg.batch_size, 8);
}

TEST(Config, UnknownKeyRejected) {
    EXPECT_THROW(parse_config_text("sed=5\n"), ConfigError);
}

TEST(Config, BadValueRejected) {
    EXPECT_THROW(parse_config_text("batch_size=many\n"), ConfigError);
    EXPECT_THROW(parse_config_text("distill.t_squared=yes\n"), ConfigError);
    EXPECT_THROW(parse_config_text("seed\n"), ConfigError);
}

TEST(Config, ValidationCatchesBadSettings) {
    ExperimentConfig cfg;
    cfg.teacher_epochs = 0;
    EXPECT_THROW(cfg.validate(), ConfigError);

    cfg = ExperimentConfig{};
    cfg.distill.alpha = 2.0;
    EXPECT_THROW(cfg.validate(), DomainError);

    cfg = ExperimentConfig{};
    cfg.dataset_kind = "directory";
    EXPECT_THROW(cfg.validate(), ConfigError);  // missing dataset.dir

    cfg = ExperimentConfig{};
    cfg.dataset_kind = "parquet";
    EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(Config, HashChangesWithAnyField) {
    ExperimentConfig a;
    ExperimentConfig b;
    EXPECT_EQ(config_hash(a), config_hash(b));
    b.distill.temperature = 3.0;
    EXPECT_NE(config_hash(a), config_hash(b));
}

TEST(Config, HashExcludingSweptKey) {
    ExperimentConfig a;
    ExperimentConfig b;
    a.distill.temperature = 3.0;
    b.distill.temperature = 100.0;
    EXPECT_EQ(config_hash_excluding(a, {"distill.temperature"}),
              config_hash_excluding(b, {"distill.temperature"}));
    b.batch_size = 16;
    EXPECT_NE(config_hash_excluding(a, {"distill.temperature"}),
              config_hash_excluding(b, {"distill.temperature"}));
}

TEST(Config, ModelConfigsInheritDatasetGeometry) {
    ExperimentConfig cfg;
    cfg.synth_image_size = 16;
    cfg.synth_channels = 1;
    ModelConfig student = cfg.student_model_config();
    EXPECT_EQ(student.input_h, 16);
    EXPECT_EQ(student.input_c, 1);
    cfg.dataset_kind = "directory";
    cfg.dataset_dir = "d";
    cfg.target_h = 224;
    cfg.target_c = 3;
    EXPECT_EQ(cfg.student_model_config().input_h, 224);
    EXPECT_EQ(cfg.teacher_model_config().input_c, 3);
}
