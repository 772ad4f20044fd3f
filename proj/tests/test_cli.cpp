// End-to-end checks of the installed CLI binary (path injected by CMake).

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "dsnet/io_util.hpp"

namespace fs = std::filesystem;

namespace {

class CliTest : public ::testing::Test {
protected:
    void SetUp() override {
        dir_ = fs::temp_directory_path() /
               ("dsnet_cli_" + std::to_string(::getpid()) + "_" +
                ::testing::UnitTest::GetInstance()->current_test_info()->name());
        fs::create_directories(dir_);
    }
    void TearDown() override { fs::remove_all(dir_); }

    std::string path(const std::string& name) const {
        return (dir_ / name).string();
    }

    // returns the process exit code; stdout/stderr land in files under dir_
    int run(const std::string& args) {
        const std::string cmd = std::string(DSNET_CLI_PATH) + " " + args +
                                " >" + path("stdout.txt") + " 2>" +
                                path("stderr.txt");
        const int rc = std::system(cmd.c_str());
        return WEXITSTATUS(rc);
    }

    std::string stdout_text() { return dsnet::read_file(path("stdout.txt")); }
    std::string stderr_text() { return dsnet::read_file(path("stderr.txt")); }

    void write_config(const std::string& extra = "") {
        std::ofstream cfg(path("exp.cfg"));
        cfg << "seed=5\n"
               "batch_size=8\n"
               "teacher.epochs=2\n"
               "student.epochs=2\n"
               "dataset.kind=synthetic\n"
               "dataset.synth.train_per_class=10\n"
               "dataset.synth.test_per_class=5\n"
               "dataset.synth.image_size=8\n"
               "dataset.synth.channels=1\n"
               "student.conv_widths=4,8,8\n"
               "teacher.width=8\n"
               "teacher.blocks=1\n"
            << extra;
    }

    fs::path dir_;
};

}  // namespace

TEST_F(CliTest, HelpExitsCleanly) {
    EXPECT_EQ(run("--help"), 0);
    EXPECT_NE(stdout_text().find("train-teacher"), std::string::npos);
}

TEST_F(CliTest, UnknownSubcommandFails) {
    EXPECT_NE(run("transmogrify"), 0);
}

TEST_F(CliTest, FullPipeline) {
    write_config();
    ASSERT_EQ(run("train-teacher --config " + path("exp.cfg") + " --out " +
                  path("teacher_out")),
              0)
        << stderr_text();
    ASSERT_TRUE(fs::exists(path("teacher_out/teacher.dkpt")));
    ASSERT_TRUE(fs::exists(path("teacher_out/report.json")));

    ASSERT_EQ(run("distill --config " + path("exp.cfg") + " --teacher " +
                  path("teacher_out/teacher.dkpt") + " --out " +
                  path("student_out")),
              0)
        << stderr_text();
    ASSERT_TRUE(fs::exists(path("student_out/student.dkpt")));

    ASSERT_EQ(run("evaluate --config " + path("exp.cfg") + " --checkpoint " +
                  path("student_out/student.dkpt") + " --out " +
                  path("eval_out")),
              0)
        << stderr_text();
    EXPECT_TRUE(fs::exists(path("eval_out/roc.csv")));
    EXPECT_TRUE(fs::exists(path("eval_out/roc.svg")));
    EXPECT_TRUE(fs::exists(path("eval_out/report.json")));

    ASSERT_EQ(run("sweep-temperature --config " + path("exp.cfg") +
                  " --teacher " + path("teacher_out/teacher.dkpt") +
                  " --t-list 3,10 --out " + path("sweep_out")),
              0)
        << stderr_text();
    EXPECT_TRUE(fs::exists(path("sweep_out/sweep.json")));
    EXPECT_TRUE(fs::exists(path("sweep_out/fig6_probe.csv")));
    EXPECT_TRUE(fs::exists(path("sweep_out/student_T3.dkpt")));
    EXPECT_TRUE(fs::exists(path("sweep_out/student_T10.dkpt")));

    ASSERT_EQ(run("sweep-batch --config " + path("exp.cfg") + " --teacher " +
                  path("teacher_out/teacher.dkpt") +
                  " --batch-list 4,8 --out " + path("sweepb_out")),
              0)
        << stderr_text();
    EXPECT_TRUE(fs::exists(path("sweepb_out/sweep.json")));
}

TEST_F(CliTest, GenSynthAndPredict) {
    ASSERT_EQ(run("gen-synth --out " + path("data") +
                  " --train-per-class 3 --test-per-class 2 --size 8 "
                  "--noise-std 0.05 --seed 7"),
              0)
        << stderr_text();
    ASSERT_TRUE(fs::exists(path("data/train/benign/img_0000.pgm")));
    ASSERT_TRUE(fs::exists(path("data/test/malignant/img_0001.pgm")));

    write_config();
    ASSERT_EQ(run("train-teacher --config " + path("exp.cfg") + " --out " +
                  path("t_out")),
              0)
        << stderr_text();
    ASSERT_EQ(run("predict --checkpoint " + path("t_out/teacher.dkpt") +
                  " --image " + path("data/test/benign/img_0000.pgm")),
              0)
        << stderr_text();
    const std::string out = stdout_text();
    EXPECT_NE(out.find("p(benign)="), std::string::npos);
    EXPECT_NE(out.find("p(malignant)="), std::string::npos);
    EXPECT_NE(out.find("label: "), std::string::npos);
}

TEST_F(CliTest, CategoryPrefixedErrorsAndNonzeroExit) {
    write_config();
    std::ofstream junk(path("bad.dkpt"), std::ios::binary);
    junk << "not a checkpoint";
    junk.close();
    EXPECT_EQ(run("evaluate --config " + path("exp.cfg") + " --checkpoint " +
                  path("bad.dkpt") + " --out " + path("eval_out")),
              1);
    EXPECT_NE(stderr_text().find("format error:"), std::string::npos);

    EXPECT_EQ(run("predict --checkpoint " + path("missing.dkpt") +
                  " --image nowhere.pgm"),
              1);
    EXPECT_NE(stderr_text().find("error:"), std::string::npos);
}

TEST_F(CliTest, ConfigErrorsAreReported) {
    std::ofstream cfg(path("bad.cfg"));
    cfg << "bogus_key=1\n";
    cfg.close();
    EXPECT_EQ(run("train-teacher --config " + path("bad.cfg")), 1);
    EXPECT_NE(stderr_text().find("config error:"), std::string::npos);
}
