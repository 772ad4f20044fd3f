#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "dsnet/checkpoint.hpp"

using namespace dsnet;
namespace fs = std::filesystem;

namespace {

class CheckpointTest : public ::testing::Test {
protected:
    void SetUp() override {
        dir_ = fs::temp_directory_path() /
               ("dsnet_ckpt_" + std::to_string(::getpid()) + "_" +
                ::testing::UnitTest::GetInstance()->current_test_info()->name());
        fs::create_directories(dir_);
    }
    void TearDown() override { fs::remove_all(dir_); }

    std::string path(const std::string& name) const {
        return (dir_ / name).string();
    }

    Model make_model() {
        Model m = build_dsnet(desk_dsnet_config());
        RngState rng(77);
        m.init_params(rng);
        return m;
    }

    fs::path dir_;
};

}  // namespace

TEST_F(CheckpointTest, RoundTripIsBitwiseIdentical) {
    Model m = make_model();
    CheckpointMeta meta{20, 42, "cafe0123"};
    save_checkpoint(m, path("student.dkpt"), meta);

    CheckpointMeta loaded_meta;
    Model loaded = load_checkpoint(path("student.dkpt"), &loaded_meta);
    EXPECT_EQ(loaded.name, m.name);
    EXPECT_EQ(loaded_meta.epochs, 20);
    EXPECT_EQ(loaded_meta.seed, 42u);
    EXPECT_EQ(loaded_meta.config_hash, "cafe0123");

    auto a = m.named_parameters();
    auto b = loaded.named_parameters();
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_EQ(a[i].first, b[i].first);
        EXPECT_EQ(a[i].second->data, b[i].second->data) << a[i].first;
    }
}

TEST_F(CheckpointTest, TeacherRoundTrip) {
    Model t = build_teacher(desk_teacher_config());
    RngState rng(5);
    t.init_params(rng);
    save_checkpoint(t, path("teacher.dkpt"));
    Model loaded = load_checkpoint(path("teacher.dkpt"));
    EXPECT_EQ(loaded.name, "teacher");
    EXPECT_EQ(count_parameters(loaded), count_parameters(t));
    auto a = t.named_parameters();
    auto b = loaded.named_parameters();
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_EQ(a[i].second->data, b[i].second->data);
    }
}

TEST_F(CheckpointTest, TruncatedFileIsCorruption) {
    Model m = make_model();
    save_checkpoint(m, path("full.dkpt"));
    const std::string bytes = read_file(path("full.dkpt"));
    for (std::size_t cut : {bytes.size() - 1, bytes.size() / 2, std::size_t{10}}) {
        std::ofstream out(path("cut.dkpt"), std::ios::binary);
        out.write(bytes.data(), static_cast<std::streamsize>(cut));
        out.close();
        EXPECT_THROW(load_checkpoint(path("cut.dkpt")), CorruptionError)
            << "cut at " << cut;
    }
}

TEST_F(CheckpointTest, BadMagicIsFormatError) {
    std::ofstream out(path("junk.dkpt"), std::ios::binary);
    out << "NOPE0000000000000000000";
    out.close();
    EXPECT_THROW(load_checkpoint(path("junk.dkpt")), FormatError);
}

TEST_F(CheckpointTest, UnsupportedVersionNamesIt) {
    Model m = make_model();
    save_checkpoint(m, path("v1.dkpt"));
    std::string bytes = read_file(path("v1.dkpt"));
    bytes[4] = 99;  // little-endian version field
    std::ofstream out(path("v99.dkpt"), std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.close();
    try {
        load_checkpoint(path("v99.dkpt"));
        FAIL() << "expected FormatError";
    } catch (const FormatError& e) {
        EXPECT_NE(std::string(e.what()).find("99"), std::string::npos);
    }
}

TEST_F(CheckpointTest, TrailingBytesAreCorruption) {
    Model m = make_model();
    save_checkpoint(m, path("ok.dkpt"));
    std::ofstream out(path("ok.dkpt"),
                      std::ios::binary | std::ios::app);
    out << "extra";
    out.close();
    EXPECT_THROW(load_checkpoint(path("ok.dkpt")), CorruptionError);
}

TEST_F(CheckpointTest, ShapeMismatchAgainstConfigIsCorruption) {
    Model m = make_model();
    save_checkpoint(m, path("ok.dkpt"));
    std::string bytes = read_file(path("ok.dkpt"));
    // first tensor record: ...name..., rank u64, extents. Patch one extent
    // by locating the first parameter name and bumping the byte after its
    // rank field.
    const std::string first_name = m.named_parameters()[0].first;
    const std::size_t npos = bytes.find(first_name);
    ASSERT_NE(npos, std::string::npos);
    const std::size_t extent_pos = npos + first_name.size() + 8;
    bytes[extent_pos] = static_cast<char>(bytes[extent_pos] + 1);
    std::ofstream out(path("bad_shape.dkpt"), std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.close();
    EXPECT_THROW(load_checkpoint(path("bad_shape.dkpt")), Error);
}

TEST_F(CheckpointTest, MissingFileIsIoError) {
    EXPECT_THROW(load_checkpoint(path("absent.dkpt")), IoError);
}
