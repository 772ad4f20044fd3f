#include <gtest/gtest.h>

#include <zlib.h>

#include <filesystem>
#include <fstream>
#include <string>

#include "dsnet/image.hpp"

using namespace dsnet;
namespace fs = std::filesystem;

namespace {

class ImageTest : public ::testing::Test {
protected:
    void SetUp() override {
        dir_ = fs::temp_directory_path() /
               ("dsnet_img_" + std::to_string(::getpid()) + "_" +
                ::testing::UnitTest::GetInstance()->current_test_info()->name());
        fs::create_directories(dir_);
    }
    void TearDown() override { fs::remove_all(dir_); }

    std::string path(const std::string& name) const {
        return (dir_ / name).string();
    }

    fs::path dir_;
};

std::string be32_bytes(std::uint32_t v) {
    std::string s(4, '\0');
    for (int i = 0; i < 4; ++i) s[3 - i] = static_cast<char>(v >> (8 * i));
    return s;
}

std::string png_chunk(const std::string& type, const std::string& data) {
    // the decoder ignores CRCs, zeros are fine here
    return be32_bytes(static_cast<std::uint32_t>(data.size())) + type + data +
           std::string(4, '\0');
}

std::string zlib_pack(const std::string& raw) {
    uLongf bound = compressBound(static_cast<uLong>(raw.size()));
    std::string out(bound, '\0');
    const int rc = compress2(reinterpret_cast<Bytef*>(out.data()), &bound,
                             reinterpret_cast<const Bytef*>(raw.data()),
                             static_cast<uLong>(raw.size()), 6);
    if (rc != Z_OK) throw std::runtime_error("zlib compress failed in test");
    out.resize(bound);
    return out;
}

std::string make_png(long w, long h, int color_type,
                     const std::string& raw_scanlines) {
    static const char sig[] = "\x89PNG\r\n\x1a\n";
    std::string ihdr = be32_bytes(static_cast<std::uint32_t>(w)) +
                       be32_bytes(static_cast<std::uint32_t>(h));
    ihdr.push_back(8);  // bit depth
    ihdr.push_back(static_cast<char>(color_type));
    ihdr.push_back(0);  // compression
    ihdr.push_back(0);  // filter method
    ihdr.push_back(0);  // interlace
    return std::string(sig, 8) + png_chunk("IHDR", ihdr) +
           png_chunk("IDAT", zlib_pack(raw_scanlines)) +
           png_chunk("IEND", "");
}

void write_bytes(const std::string& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

TEST_F(ImageTest, PgmRoundTrip) {
    Tensor img = Tensor::zeros({3, 2, 1});
    for (long i = 0; i < img.numel(); ++i) {
        img.data[static_cast<std::size_t>(i)] = (i * 40) / 255.0;
    }
    encode_pnm(img, path("x.pgm"));
    Tensor back = decode_image(path("x.pgm"));
    EXPECT_EQ(back.shape, img.shape);
    for (std::size_t i = 0; i < img.data.size(); ++i) {
        EXPECT_NEAR(back.data[i], img.data[i], 0.5 / 255.0);
    }
}

TEST_F(ImageTest, PpmRoundTrip) {
    Tensor img = Tensor::zeros({2, 2, 3});
    for (long i = 0; i < img.numel(); ++i) {
        img.data[static_cast<std::size_t>(i)] = (i * 20 + 5) / 255.0;
    }
    encode_pnm(img, path("x.ppm"));
    Tensor back = decode_image(path("x.ppm"));
    EXPECT_EQ(back.shape, img.shape);
    for (std::size_t i = 0; i < img.data.size(); ++i) {
        EXPECT_NEAR(back.data[i], img.data[i], 0.5 / 255.0);
    }
}

TEST_F(ImageTest, PpmHandlesComments) {
    write_bytes(path("c.pgm"), std::string("P5\n# a comment\n2 1\n255\n") +
                                   std::string("\x10\x20", 2));
    Tensor img = decode_image(path("c.pgm"));
    EXPECT_EQ(img.shape, (Shape{1, 2, 1}));
    EXPECT_NEAR(img.at(0L, 0L, 0L), 0x10 / 255.0, 1e-12);
    EXPECT_NEAR(img.at(0L, 1L, 0L), 0x20 / 255.0, 1e-12);
}

TEST_F(ImageTest, TruncatedPpmIsCorruption) {
    write_bytes(path("t.pgm"), "P5\n4 4\n255\nxy");
    EXPECT_THROW(decode_image(path("t.pgm")), CorruptionError);
}

TEST_F(ImageTest, SixteenBitPpmRejected) {
    write_bytes(path("w.pgm"), "P5\n1 1\n65535\nab");
    EXPECT_THROW(decode_image(path("w.pgm")), FormatError);
}

TEST_F(ImageTest, PngRgbFilterNone) {
    // 2x2 RGB, rows filtered with type 0
    std::string raw;
    raw.push_back(0);
    raw += std::string("\x00\x00\x00\xff\x00\x00", 6);  // black, red
    raw.push_back(0);
    raw += std::string("\x00\xff\x00\x00\x00\xff", 6);  // green, blue
    write_bytes(path("rgb.png"), make_png(2, 2, 2, raw));
    Tensor img = decode_image(path("rgb.png"));
    EXPECT_EQ(img.shape, (Shape{2, 2, 3}));
    EXPECT_EQ(img.at(0L, 1L, 0L), 1.0);
    EXPECT_EQ(img.at(1L, 0L, 1L), 1.0);
    EXPECT_EQ(img.at(1L, 1L, 2L), 1.0);
    EXPECT_EQ(img.at(0L, 0L, 0L), 0.0);
}

TEST_F(ImageTest, PngSubAndUpFilters) {
    // 3-pixel gray rows: first row sub-filtered, second row up-filtered
    std::string raw;
    raw.push_back(1);                               // sub
    raw += std::string("\x0a\x05\x05", 3);          // decodes to 10,15,20
    raw.push_back(2);                               // up
    raw += std::string("\x01\x01\x01", 3);          // decodes to 11,16,21
    write_bytes(path("g.png"), make_png(3, 2, 0, raw));
    Tensor img = decode_image(path("g.png"));
    EXPECT_EQ(img.shape, (Shape{2, 3, 1}));
    EXPECT_NEAR(img.at(0L, 0L, 0L), 10 / 255.0, 1e-12);
    EXPECT_NEAR(img.at(0L, 1L, 0L), 15 / 255.0, 1e-12);
    EXPECT_NEAR(img.at(0L, 2L, 0L), 20 / 255.0, 1e-12);
    EXPECT_NEAR(img.at(1L, 0L, 0L), 11 / 255.0, 1e-12);
    EXPECT_NEAR(img.at(1L, 2L, 0L), 21 / 255.0, 1e-12);
}

TEST_F(ImageTest, PngAlphaIsDropped) {
    std::string raw;
    raw.push_back(0);
    raw += std::string("\x40\xff\x80\x00", 4);  // two gray+alpha pixels
    write_bytes(path("ga.png"), make_png(2, 1, 4, raw));
    Tensor img = decode_image(path("ga.png"));
    EXPECT_EQ(img.shape, (Shape{1, 2, 1}));
    EXPECT_NEAR(img.at(0L, 0L, 0L), 0x40 / 255.0, 1e-12);
    EXPECT_NEAR(img.at(0L, 1L, 0L), 0x80 / 255.0, 1e-12);
}

TEST_F(ImageTest, GarbageIsFormatError) {
    write_bytes(path("junk.bin"), "not an image at all");
    EXPECT_THROW(decode_image(path("junk.bin")), FormatError);
}

TEST(Resize, ConstantStaysConstant) {
    Tensor img = Tensor::full({5, 7, 1}, 0.42);
    Tensor out = resize_image(img, 11, 3);
    for (double v : out.data) EXPECT_DOUBLE_EQ(v, 0.42);
}

TEST(Resize, IdentityIsBitwise) {
    RngState rng(7);
    Tensor img = Tensor::uniform({6, 5, 3}, 0.0, 1.0, rng);
    Tensor out = resize_image(img, 6, 5);
    EXPECT_EQ(out.data, img.data);
}

TEST(Resize, UpscaleIsMonotoneOnRamp) {
    Tensor img = Tensor::from_data({2, 2, 1}, {0, 1, 0, 1});
    Tensor out = resize_image(img, 2, 4);
    // corner-aligned: columns sample x = j/3, giving 0, 1/3, 2/3, 1
    EXPECT_NEAR(out.at(0L, 0L, 0L), 0.0, 1e-15);
    EXPECT_NEAR(out.at(0L, 1L, 0L), 1.0 / 3.0, 1e-15);
    EXPECT_NEAR(out.at(0L, 2L, 0L), 2.0 / 3.0, 1e-15);
    EXPECT_NEAR(out.at(0L, 3L, 0L), 1.0, 1e-15);
    for (long y = 0; y < 2; ++y) {
        for (long x = 1; x < 4; ++x) {
            EXPECT_GE(out.at(y, x, 0L), out.at(y, x - 1, 0L));
        }
    }
}

TEST(Resize, LargePhotoDownToCanonicalInput) {
    RngState rng(9);
    Tensor img = Tensor::uniform({767, 1022, 3}, 0.0, 1.0, rng);
    Tensor out = resize_image(img, 224, 224);
    EXPECT_EQ(out.shape, (Shape{224, 224, 3}));
    for (double v : out.data) {
        EXPECT_GE(v, 0.0);
        EXPECT_LE(v, 1.0);
    }
}

TEST(Resize, ZeroTargetIsShapeError) {
    Tensor img = Tensor::full({2, 2, 1}, 0.5);
    EXPECT_THROW(resize_image(img, 0, 4), ShapeError);
    EXPECT_THROW(resize_image(img, 4, 0), ShapeError);
}

TEST(ConvertChannels, GrayToRgbReplicates) {
    Tensor g = Tensor::from_data({1, 2, 1}, {0.25, 0.75});
    Tensor rgb = convert_channels(g, 3);
    EXPECT_EQ(rgb.shape, (Shape{1, 2, 3}));
    for (long c = 0; c < 3; ++c) {
        EXPECT_EQ(rgb.at(0L, 0L, c), 0.25);
        EXPECT_EQ(rgb.at(0L, 1L, c), 0.75);
    }
}

TEST(ConvertChannels, RgbToGrayIsLuma) {
    Tensor rgb = Tensor::from_data({1, 1, 3}, {1.0, 0.5, 0.25});
    Tensor g = convert_channels(rgb, 1);
    EXPECT_NEAR(g.at(0L, 0L, 0L), 0.299 + 0.587 * 0.5 + 0.114 * 0.25, 1e-15);
}
