#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>

#include "dsnet/dataset.hpp"

using namespace dsnet;
namespace fs = std::filesystem;

namespace {

class DatasetDirTest : public ::testing::Test {
protected:
    void SetUp() override {
        dir_ = fs::temp_directory_path() /
               ("dsnet_data_" + std::to_string(::getpid()) + "_" +
                ::testing::UnitTest::GetInstance()->current_test_info()->name());
        fs::create_directories(dir_);
    }
    void TearDown() override { fs::remove_all(dir_); }

    std::string path(const std::string& name) const {
        return (dir_ / name).string();
    }

    fs::path dir_;
};

}  // namespace

TEST(SynthBlobs, DeterministicUnderSeed) {
    LabeledDataset a = synth_blobs(10, 16, 0.05, 7);
    LabeledDataset b = synth_blobs(10, 16, 0.05, 7);
    EXPECT_EQ(a.images.data, b.images.data);
    EXPECT_EQ(a.labels, b.labels);
}

TEST(SynthBlobs, SplitsDiffer) {
    LabeledDataset train = synth_blobs(5, 16, 0.05, 7, 1, "train");
    LabeledDataset test = synth_blobs(5, 16, 0.05, 7, 1, "test");
    EXPECT_NE(train.images.data, test.images.data);
}

TEST(SynthBlobs, BalancedCounts) {
    LabeledDataset ds = synth_blobs(100, 16, 0.05, 3);
    EXPECT_EQ(ds.size(), 200);
    EXPECT_EQ(std::count(ds.labels.begin(), ds.labels.end(), 0), 100);
    EXPECT_EQ(std::count(ds.labels.begin(), ds.labels.end(), 1), 100);
    EXPECT_EQ(ds.images.shape, (Shape{200, 16, 16, 1}));
}

TEST(SynthBlobs, PixelsStayInRange) {
    LabeledDataset ds = synth_blobs(20, 16, 0.3, 11);
    for (double v : ds.images.data) {
        EXPECT_GE(v, 0.0);
        EXPECT_LE(v, 1.0);
    }
}

TEST(SynthBlobs, NoiselessImagesDifferByJitterOnly) {
    LabeledDataset ds = synth_blobs(3, 16, 0.0, 13);
    const long px = 16 * 16;
    for (long i = 0; i < 3; ++i) {
        for (long j = i + 1; j < 3; ++j) {
            bool differ = false;
            for (long p = 0; p < px; ++p) {
                if (ds.images.data[static_cast<std::size_t>(i * px + p)] !=
                    ds.images.data[static_cast<std::size_t>(j * px + p)]) {
                    differ = true;
                    break;
                }
            }
            EXPECT_TRUE(differ) << "images " << i << " and " << j;
        }
    }
}

TEST(SynthBlobs, MeanRangesOverlap) {
    // the classes must not be separable by raw pixel mean
    LabeledDataset ds = synth_blobs(50, 16, 0.05, 21);
    const long px = 16 * 16;
    double lo[2] = {1.0, 1.0}, hi[2] = {0.0, 0.0};
    for (long i = 0; i < ds.size(); ++i) {
        double m = 0.0;
        for (long p = 0; p < px; ++p) {
            m += ds.images.data[static_cast<std::size_t>(i * px + p)];
        }
        m /= px;
        const int cls = ds.labels[static_cast<std::size_t>(i)];
        lo[cls] = std::min(lo[cls], m);
        hi[cls] = std::max(hi[cls], m);
    }
    EXPECT_LE(lo[0], hi[1]);
    EXPECT_LE(lo[1], hi[0]);
}

TEST(SynthBlobs, ValidatesArguments) {
    EXPECT_THROW(synth_blobs(0, 16, 0.1, 1), DomainError);
    EXPECT_THROW(synth_blobs(5, 16, -0.1, 1), DomainError);
    EXPECT_THROW(synth_blobs(5, 2, 0.1, 1), DomainError);
}

TEST(MakeBatches, SizesAndCoverage) {
    LabeledDataset ds = synth_blobs(5, 8, 0.0, 2);  // n = 10
    auto batches = make_batches(ds, 4, 1, false);
    ASSERT_EQ(batches.size(), 3u);
    EXPECT_EQ(batches[0].images.shape[0], 4);
    EXPECT_EQ(batches[1].images.shape[0], 4);
    EXPECT_EQ(batches[2].images.shape[0], 2);

    std::set<long> seen;
    for (const Batch& b : batches) {
        for (long ix : b.indices) seen.insert(ix);
    }
    EXPECT_EQ(seen.size(), 10u);
    EXPECT_EQ(*seen.begin(), 0);
    EXPECT_EQ(*seen.rbegin(), 9);
}

TEST(MakeBatches, ShuffleIsSeedDeterministic) {
    LabeledDataset ds = synth_blobs(8, 8, 0.0, 3);
    auto a = make_batches(ds, 4, 7, true, 2);
    auto b = make_batches(ds, 4, 7, true, 2);
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_EQ(a[i].indices, b[i].indices);
    }
    auto c = make_batches(ds, 4, 7, true, 3);
    bool differ = false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i].indices != c[i].indices) differ = true;
    }
    EXPECT_TRUE(differ) << "epochs must reshuffle";
}

TEST(MakeBatches, LabelsTravelWithImages) {
    // watermark: first pixel of every image encodes its label
    LabeledDataset ds;
    ds.split = "train";
    const long n = 9;
    ds.images = Tensor::zeros({n, 2, 2, 1});
    for (long i = 0; i < n; ++i) {
        const int label = i % 2;
        ds.labels.push_back(label);
        ds.images.at(i, 0L, 0L, 0L) = static_cast<double>(label);
    }
    for (const Batch& b : make_batches(ds, 4, 5, true, 1)) {
        for (long r = 0; r < b.images.shape[0]; ++r) {
            EXPECT_EQ(b.images.at(r, 0L, 0L, 0L),
                      static_cast<double>(b.labels[static_cast<std::size_t>(r)]));
            EXPECT_EQ(b.labels_one_hot.at(r, static_cast<long>(
                                                 b.labels[static_cast<std::size_t>(r)])),
                      1.0);
        }
    }
}

TEST(MakeBatches, OversizedBatchFallsBackToSingle) {
    LabeledDataset ds = synth_blobs(3, 8, 0.0, 4);  // n = 6
    auto batches = make_batches(ds, 100, 1, false);
    ASSERT_EQ(batches.size(), 1u);
    EXPECT_EQ(batches[0].images.shape[0], 6);
}

TEST(MakeBatches, Validates) {
    LabeledDataset ds = synth_blobs(2, 8, 0.0, 4);
    EXPECT_THROW(make_batches(ds, 0, 1, false), DomainError);
    LabeledDataset empty;
    EXPECT_THROW(make_batches(empty, 4, 1, false), DomainError);
}

TEST(OneHot, BasicAndErrors) {
    Tensor t = one_hot({0, 1, 1}, 2);
    EXPECT_EQ(t.data, (std::vector<double>{1, 0, 0, 1, 0, 1}));
    EXPECT_THROW(one_hot({2}, 2), DomainError);
    EXPECT_THROW(one_hot({}, 2), ShapeError);
}

TEST_F(DatasetDirTest, RoundTripThroughFiles) {
    LabeledDataset ds = synth_blobs(2, 8, 0.05, 9);
    write_image_dataset(ds, path("root"));
    LabeledDataset back =
        load_image_dataset(path("root"), 8, 8, 1, true, "train");
    EXPECT_EQ(back.size(), 4);
    EXPECT_EQ(back.labels, (std::vector<int>{0, 0, 1, 1}));
    // 8-bit quantization: loader values match to half a step
    for (std::size_t i = 0; i < back.images.data.size(); ++i) {
        EXPECT_NEAR(back.images.data[i], ds.images.data[i], 0.5 / 255.0 + 1e-12);
    }
}

TEST_F(DatasetDirTest, LexicographicOrderAcrossClasses) {
    fs::create_directories(path("root/benign"));
    fs::create_directories(path("root/malignant"));
    Tensor img = Tensor::full({4, 4, 1}, 0.5);
    encode_pnm(img, path("root/benign/b_2.pgm"));
    encode_pnm(img, path("root/benign/a_1.pgm"));
    encode_pnm(img, path("root/malignant/m1.pgm"));
    encode_pnm(img, path("root/malignant/a0.pgm"));
    LabeledDataset ds = load_image_dataset(path("root"), 4, 4, 1);
    EXPECT_EQ(ds.labels, (std::vector<int>{0, 0, 1, 1}));
    EXPECT_EQ(ds.size(), 4);
}

TEST_F(DatasetDirTest, ResizesToTarget) {
    fs::create_directories(path("root/benign"));
    fs::create_directories(path("root/malignant"));
    RngState rng(5);
    encode_pnm(Tensor::uniform({30, 20, 1}, 0.0, 1.0, rng),
               path("root/benign/a.pgm"));
    encode_pnm(Tensor::uniform({7, 9, 1}, 0.0, 1.0, rng),
               path("root/malignant/b.pgm"));
    LabeledDataset ds = load_image_dataset(path("root"), 12, 12, 3);
    EXPECT_EQ(ds.images.shape, (Shape{2, 12, 12, 3}));
    for (double v : ds.images.data) {
        EXPECT_GE(v, 0.0);
        EXPECT_LE(v, 1.0);
    }
}

TEST_F(DatasetDirTest, UnknownClassDirectoryIsLabelingError) {
    fs::create_directories(path("root/benign"));
    fs::create_directories(path("root/malignant"));
    fs::create_directories(path("root/mystery"));
    EXPECT_THROW(load_image_dataset(path("root"), 4, 4, 1), LabelingError);
}

TEST_F(DatasetDirTest, EmptyClassDirectoryWarnsAndLoads) {
    fs::create_directories(path("root/benign"));
    fs::create_directories(path("root/malignant"));
    encode_pnm(Tensor::full({4, 4, 1}, 0.3), path("root/malignant/m.pgm"));
    LabeledDataset ds = load_image_dataset(path("root"), 4, 4, 1);
    EXPECT_EQ(ds.size(), 1);
    EXPECT_EQ(ds.labels, (std::vector<int>{1}));
}

TEST_F(DatasetDirTest, UndecodableFileFailFastOrSkip) {
    fs::create_directories(path("root/benign"));
    fs::create_directories(path("root/malignant"));
    encode_pnm(Tensor::full({4, 4, 1}, 0.3), path("root/benign/ok.pgm"));
    std::ofstream bad(path("root/malignant/broken.png"));
    bad << "not a png";
    bad.close();
    EXPECT_THROW(load_image_dataset(path("root"), 4, 4, 1, true), FormatError);
    LabeledDataset ds = load_image_dataset(path("root"), 4, 4, 1, false);
    EXPECT_EQ(ds.size(), 1);
    EXPECT_EQ(ds.labels, (std::vector<int>{0}));
}

TEST_F(DatasetDirTest, MissingRootIsIoError) {
    EXPECT_THROW(load_image_dataset(path("nowhere"), 4, 4, 1), IoError);
}
