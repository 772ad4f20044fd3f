#pragma once

#include <zlib.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "dsnet/error.hpp"
#include "dsnet/io_util.hpp"
#include "dsnet/tensor.hpp"

namespace dsnet {

namespace detail {

inline bool has_png_signature(const std::string& bytes) {
    static const unsigned char sig[8] = {137, 80, 78, 71, 13, 10, 26, 10};
    if (bytes.size() < 8) return false;
    for (int i = 0; i < 8; ++i) {
        if (static_cast<unsigned char>(bytes[i]) != sig[i]) return false;
    }
    return true;
}

inline std::uint32_t be32(const std::string& bytes, std::size_t pos) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
        v = (v << 8) | static_cast<unsigned char>(bytes[pos + i]);
    }
    return v;
}

inline int paeth(int a, int b, int c) {
    const int p = a + b - c;
    const int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
    if (pa <= pb && pa <= pc) return a;
    if (pb <= pc) return b;
    return c;
}

// 8-bit, non-interlaced PNG: gray, gray+alpha, RGB or RGBA. Palette and
// 16-bit files are rejected. CRCs are not verified; a corrupted stream
// shows up as a zlib failure or a size mismatch instead.
inline Tensor decode_png(const std::string& bytes, const std::string& path) {
    std::size_t pos = 8;
    long w = 0, h = 0, channels = 0;
    std::string idat;
    bool saw_ihdr = false;
    while (pos + 8 <= bytes.size()) {
        const std::uint32_t len = be32(bytes, pos);
        const std::string type = bytes.substr(pos + 4, 4);
        pos += 8;
        if (pos + len + 4 > bytes.size()) {
            throw CorruptionError("truncated PNG chunk in " + path);
        }
        if (type == "IHDR") {
            if (len != 13) throw FormatError("bad IHDR in " + path);
            w = static_cast<long>(be32(bytes, pos));
            h = static_cast<long>(be32(bytes, pos + 4));
            const int bit_depth = static_cast<unsigned char>(bytes[pos + 8]);
            const int color_type = static_cast<unsigned char>(bytes[pos + 9]);
            const int interlace = static_cast<unsigned char>(bytes[pos + 12]);
            if (bit_depth != 8) {
                throw FormatError("only 8-bit PNG is supported: " + path);
            }
            if (interlace != 0) {
                throw FormatError("interlaced PNG is not supported: " + path);
            }
            switch (color_type) {
                case 0: channels = 1; break;
                case 2: channels = 3; break;
                case 4: channels = 2; break;
                case 6: channels = 4; break;
                default:
                    throw FormatError("palette PNG is not supported: " + path);
            }
            saw_ihdr = true;
        } else if (type == "IDAT") {
            idat += bytes.substr(pos, len);
        } else if (type == "IEND") {
            break;
        }
        pos += len + 4;  // skip data + crc
    }
    if (!saw_ihdr || w < 1 || h < 1) {
        throw FormatError("PNG without a valid IHDR: " + path);
    }
    if (idat.empty()) throw CorruptionError("PNG without image data: " + path);

    const std::size_t raw_size =
        static_cast<std::size_t>(h) * (1 + static_cast<std::size_t>(w) * channels);
    std::vector<unsigned char> raw(raw_size);
    uLongf dest_len = raw_size;
    const int zrc = uncompress(raw.data(), &dest_len,
                               reinterpret_cast<const Bytef*>(idat.data()),
                               static_cast<uLong>(idat.size()));
    if (zrc != Z_OK || dest_len != raw_size) {
        throw CorruptionError("PNG image data does not inflate cleanly: " +
                              path);
    }

    const long bpp = channels;
    const long stride = w * channels;
    std::vector<unsigned char> pix(static_cast<std::size_t>(h) * stride);
    for (long y = 0; y < h; ++y) {
        const unsigned char filter = raw[static_cast<std::size_t>(y) * (stride + 1)];
        const unsigned char* src =
            raw.data() + static_cast<std::size_t>(y) * (stride + 1) + 1;
        unsigned char* dst = pix.data() + static_cast<std::size_t>(y) * stride;
        const unsigned char* up =
            y > 0 ? pix.data() + static_cast<std::size_t>(y - 1) * stride
                  : nullptr;
        for (long x = 0; x < stride; ++x) {
            const int left = x >= bpp ? dst[x - bpp] : 0;
            const int above = up != nullptr ? up[x] : 0;
            const int corner = (up != nullptr && x >= bpp) ? up[x - bpp] : 0;
            int v = src[x];
            switch (filter) {
                case 0: break;
                case 1: v += left; break;
                case 2: v += above; break;
                case 3: v += (left + above) / 2; break;
                case 4: v += paeth(left, above, corner); break;
                default:
                    throw CorruptionError("bad PNG filter byte in " + path);
            }
            dst[x] = static_cast<unsigned char>(v & 0xff);
        }
    }

    // drop alpha if present
    const long out_c = channels == 2 ? 1 : (channels == 4 ? 3 : channels);
    Tensor img({h, w, out_c});
    for (long y = 0; y < h; ++y) {
        for (long x = 0; x < w; ++x) {
            const unsigned char* px =
                pix.data() + (static_cast<std::size_t>(y) * w + x) * channels;
            for (long c = 0; c < out_c; ++c) {
                img.at(y, x, c) = px[c] / 255.0;
            }
        }
    }
    return img;
}

// Binary netpbm: P5 (gray) and P6 (RGB), 8-bit maxval only.
inline Tensor decode_pnm(const std::string& bytes, const std::string& path) {
    std::size_t pos = 0;
    auto next_token = [&]() -> std::string {
        while (pos < bytes.size()) {
            if (bytes[pos] == '#') {
                while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
            } else if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
                ++pos;
            } else {
                break;
            }
        }
        std::size_t start = pos;
        while (pos < bytes.size() &&
               !std::isspace(static_cast<unsigned char>(bytes[pos]))) {
            ++pos;
        }
        if (start == pos) throw FormatError("truncated netpbm header: " + path);
        return bytes.substr(start, pos - start);
    };

    const std::string magic = next_token();
    long channels = 0;
    if (magic == "P5") channels = 1;
    else if (magic == "P6") channels = 3;
    else throw FormatError("unsupported netpbm magic '" + magic + "': " + path);

    const long w = std::stol(next_token());
    const long h = std::stol(next_token());
    const long maxval = std::stol(next_token());
    if (w < 1 || h < 1) throw FormatError("bad netpbm dimensions: " + path);
    if (maxval != 255) {
        throw FormatError("only maxval 255 netpbm is supported: " + path);
    }
    ++pos;  // single whitespace after maxval
    const std::size_t need = static_cast<std::size_t>(w) * h * channels;
    if (bytes.size() - pos < need) {
        throw CorruptionError("truncated netpbm pixel data: " + path);
    }
    Tensor img({h, w, channels});
    for (std::size_t i = 0; i < need; ++i) {
        img.data[i] = static_cast<unsigned char>(bytes[pos + i]) / 255.0;
    }
    return img;
}

}  // namespace detail

// Decodes PNG/PPM/PGM by content signature into an [h,w,c] tensor with
// values in [0,1]; c is 1 or 3 (alpha channels are dropped).
inline Tensor decode_image(const std::string& path) {
    const std::string bytes = read_file(path);
    if (detail::has_png_signature(bytes)) {
        return detail::decode_png(bytes, path);
    }
    if (bytes.size() >= 2 && bytes[0] == 'P' &&
        (bytes[1] == '5' || bytes[1] == '6')) {
        return detail::decode_pnm(bytes, path);
    }
    throw FormatError("unrecognized image format (expected PNG, PPM or PGM): " +
                      path);
}

// Writes [h,w,1] as binary PGM or [h,w,3] as binary PPM, maxval 255.
inline void encode_pnm(const Tensor& img, const std::string& path) {
    if (img.rank() != 3 || (img.shape[2] != 1 && img.shape[2] != 3)) {
        throw ShapeError("encode_pnm expects [h,w,1] or [h,w,3], got " +
                         shape_to_string(img.shape));
    }
    const long h = img.shape[0], w = img.shape[1], c = img.shape[2];
    AtomicFile file(path);
    std::ostream& os = file.stream();
    os << (c == 1 ? "P5" : "P6") << "\n" << w << " " << h << "\n255\n";
    for (double v : img.data) {
        const double clamped = std::clamp(v, 0.0, 1.0);
        os.put(static_cast<char>(
            static_cast<int>(std::lround(clamped * 255.0))));
    }
    file.commit();
}

// Bilinear resize with corner-aligned sampling: target pixel (Y,X) reads
// source coordinate (Y*(h-1)/(H-1), X*(w-1)/(W-1)) (0 when the target axis
// has a single pixel) and blends the four surrounding pixels by the
// fractional parts. An identity resize reproduces the input bitwise.
inline Tensor resize_image(const Tensor& img, long target_h, long target_w) {
    if (img.rank() != 3) {
        throw ShapeError("resize_image expects [h,w,c], got " +
                         shape_to_string(img.shape));
    }
    if (target_h < 1 || target_w < 1) {
        throw ShapeError("resize target extents must be >= 1");
    }
    const long h = img.shape[0], w = img.shape[1], c = img.shape[2];
    Tensor out({target_h, target_w, c});
    for (long y = 0; y < target_h; ++y) {
        const double fy = target_h == 1
                              ? 0.0
                              : static_cast<double>(y) * (h - 1) / (target_h - 1);
        const long y0 = static_cast<long>(fy);
        const long y1 = std::min(y0 + 1, h - 1);
        const double wy = fy - static_cast<double>(y0);
        for (long x = 0; x < target_w; ++x) {
            const double fx =
                target_w == 1
                    ? 0.0
                    : static_cast<double>(x) * (w - 1) / (target_w - 1);
            const long x0 = static_cast<long>(fx);
            const long x1 = std::min(x0 + 1, w - 1);
            const double wx = fx - static_cast<double>(x0);
            for (long ch = 0; ch < c; ++ch) {
                out.at(y, x, ch) =
                    (1.0 - wy) * ((1.0 - wx) * img.at(y0, x0, ch) +
                                  wx * img.at(y0, x1, ch)) +
                    wy * ((1.0 - wx) * img.at(y1, x0, ch) +
                          wx * img.at(y1, x1, ch));
            }
        }
    }
    return out;
}

// Adapts channel count: replicate gray to RGB, or reduce RGB to gray with
// Rec.601 luma weights.
inline Tensor convert_channels(const Tensor& img, long target_c) {
    if (img.rank() != 3) {
        throw ShapeError("convert_channels expects [h,w,c], got " +
                         shape_to_string(img.shape));
    }
    const long h = img.shape[0], w = img.shape[1], c = img.shape[2];
    if (c == target_c) return img;
    if (target_c != 1 && target_c != 3) {
        throw ConfigError("target channel count must be 1 or 3");
    }
    Tensor out({h, w, target_c});
    for (long y = 0; y < h; ++y) {
        for (long x = 0; x < w; ++x) {
            if (c == 1 && target_c == 3) {
                for (long ch = 0; ch < 3; ++ch) {
                    out.at(y, x, ch) = img.at(y, x, 0);
                }
            } else if (c == 3 && target_c == 1) {
                out.at(y, x, 0) = 0.299 * img.at(y, x, 0) +
                                  0.587 * img.at(y, x, 1) +
                                  0.114 * img.at(y, x, 2);
            } else {
                throw ConfigError("cannot convert " + std::to_string(c) +
                                  " channels to " + std::to_string(target_c));
            }
        }
    }
    return out;
}

}  // namespace dsnet
