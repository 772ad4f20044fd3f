#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numbers>
#include <string>
#include <vector>

#include "dsnet/error.hpp"
#include "dsnet/image.hpp"
#include "dsnet/io_util.hpp"
#include "dsnet/rng.hpp"
#include "dsnet/tensor.hpp"

namespace dsnet {

struct LabeledDataset {
    Tensor images;  // [n,H,W,C] in [0,1]; default-empty when n == 0
    std::vector<int> labels;  // 0 = benign, 1 = malignant
    std::string split;        // "train" | "test"
    std::vector<std::string> class_names = {"benign", "malignant"};

    long size() const { return static_cast<long>(labels.size()); }
    long height() const { return images.rank() == 4 ? images.shape[1] : 0; }
    long width() const { return images.rank() == 4 ? images.shape[2] : 0; }
    long channels() const { return images.rank() == 4 ? images.shape[3] : 0; }

    Tensor image(long i) const {
        const long px = height() * width() * channels();
        std::vector<double> v(images.data.begin() + i * px,
                              images.data.begin() + (i + 1) * px);
        return Tensor::from_data({1, height(), width(), channels()},
                                 std::move(v));
    }
};

struct Batch {
    Tensor images;
    Tensor labels_one_hot;
    std::vector<int> labels;
    std::vector<long> indices;  // positions in the source dataset
    long index = 0;
};

inline Tensor one_hot(const std::vector<int>& labels, long num_classes) {
    if (labels.empty()) throw ShapeError("one_hot: empty label array");
    Tensor t({static_cast<long>(labels.size()), num_classes});
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0 || labels[i] >= num_classes) {
            throw DomainError("label " + std::to_string(labels[i]) +
                              " out of range for " +
                              std::to_string(num_classes) + " classes");
        }
        t.at(static_cast<long>(i), static_cast<long>(labels[i])) = 1.0;
    }
    return t;
}

// Synthetic desk-scale stand-in for a dermoscopy archive. Class 0 is a
// centered dark disk on a light field; class 1 is an off-center bright blob
// with a sinusoidally wobbled outline on a darker field. Base intensities
// are tuned so the two classes' raw pixel-mean ranges overlap - a mean
// thresholder cannot separate them, shape and polarity can. Per-image
// geometric jitter: background/foreground level, center, radius and (for
// class 1) outline phases. The draw sequence is a pure function of
// (seed, split), so a fixed seed reproduces the dataset bitwise.
inline LabeledDataset synth_blobs(long n_per_class, long image_size,
                                  double noise_std, std::uint64_t seed,
                                  long channels = 1,
                                  const std::string& split = "train") {
    if (n_per_class < 1) throw DomainError("n_per_class must be >= 1");
    if (image_size < 4) throw DomainError("image_size must be >= 4");
    if (noise_std < 0.0) throw DomainError("noise_std must be >= 0");
    if (channels != 1 && channels != 3) {
        throw ConfigError("synthetic images support 1 or 3 channels");
    }

    RngState rng(derive_seed(seed, "synth-" + split));
    const long s = image_size;
    const long n = 2 * n_per_class;
    LabeledDataset ds;
    ds.split = split;
    ds.images = Tensor({n, s, s, channels});
    ds.labels.resize(static_cast<std::size_t>(n));

    double class_mean_lo[2] = {1.0, 1.0};
    double class_mean_hi[2] = {0.0, 0.0};
    const double mid = (s - 1) / 2.0;

    for (int cls = 0; cls < 2; ++cls) {
        for (long i = 0; i < n_per_class; ++i) {
            const long sample = cls * n_per_class + i;
            ds.labels[static_cast<std::size_t>(sample)] = cls;

            double bg, fg, cx, cy, radius, phase3 = 0, phase5 = 0;
            if (cls == 0) {
                bg = rng.uniform(0.67, 0.77);
                fg = rng.uniform(0.17, 0.27);
                cx = mid + rng.uniform(-0.06, 0.06) * s;
                cy = mid + rng.uniform(-0.06, 0.06) * s;
                radius = rng.uniform(0.26, 0.34) * s;
            } else {
                bg = rng.uniform(0.40, 0.50);
                fg = rng.uniform(0.84, 0.92);
                const double angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
                const double off = rng.uniform(0.15, 0.25) * s;
                cx = mid + off * std::cos(angle);
                cy = mid + off * std::sin(angle);
                radius = rng.uniform(0.22, 0.30) * s;
                phase3 = rng.uniform(0.0, 2.0 * std::numbers::pi);
                phase5 = rng.uniform(0.0, 2.0 * std::numbers::pi);
            }

            double mean = 0.0;
            for (long y = 0; y < s; ++y) {
                for (long x = 0; x < s; ++x) {
                    const double dy = y - cy, dx = x - cx;
                    const double dist = std::hypot(dy, dx);
                    double edge = radius;
                    if (cls == 1) {
                        const double theta = std::atan2(dy, dx);
                        edge = radius * (1.0 + 0.25 * std::sin(3 * theta + phase3) +
                                         0.15 * std::sin(5 * theta + phase5));
                    }
                    const double cov =
                        std::clamp(edge - dist + 0.5, 0.0, 1.0);
                    const double base = bg + (fg - bg) * cov;
                    for (long c = 0; c < channels; ++c) {
                        const double v = std::clamp(
                            base + rng.normal(0.0, noise_std), 0.0, 1.0);
                        ds.images.at(sample, y, x, c) = v;
                        mean += v;
                    }
                }
            }
            mean /= static_cast<double>(s * s * channels);
            class_mean_lo[cls] = std::min(class_mean_lo[cls], mean);
            class_mean_hi[cls] = std::max(class_mean_hi[cls], mean);
        }
    }

    if (n_per_class > 1 && (class_mean_hi[0] < class_mean_lo[1] ||
                            class_mean_hi[1] < class_mean_lo[0])) {
        warn("synthetic classes are separable by raw pixel mean alone "
             "(mean ranges do not overlap)");
    }
    return ds;
}

// Deterministic batching. With shuffle the permutation is a pure function
// of (seed, epoch); the final short batch is kept. batch_size larger than
// the dataset degrades to a single full batch with a warning.
inline std::vector<Batch> make_batches(const LabeledDataset& ds,
                                       long batch_size, std::uint64_t seed,
                                       bool shuffle, long epoch = 0) {
    if (batch_size < 1) throw DomainError("batch_size must be >= 1");
    const long n = ds.size();
    if (n == 0) throw DomainError("cannot batch an empty dataset");
    if (batch_size > n) {
        warn("batch size " + std::to_string(batch_size) +
             " exceeds dataset size " + std::to_string(n) +
             "; using a single batch");
        batch_size = n;
    }

    std::vector<long> perm(static_cast<std::size_t>(n));
    for (long i = 0; i < n; ++i) perm[static_cast<std::size_t>(i)] = i;
    if (shuffle) {
        RngState rng(derive_seed(seed, "shuffle",
                                 static_cast<std::uint64_t>(epoch)));
        for (long i = n - 1; i > 0; --i) {
            const long j = static_cast<long>(
                rng.next_below(static_cast<std::uint64_t>(i + 1)));
            std::swap(perm[static_cast<std::size_t>(i)],
                      perm[static_cast<std::size_t>(j)]);
        }
    }

    const long k = static_cast<long>(ds.class_names.size());
    const long px = ds.height() * ds.width() * ds.channels();
    std::vector<Batch> batches;
    for (long start = 0; start < n; start += batch_size) {
        const long len = std::min(batch_size, n - start);
        Batch b;
        b.index = static_cast<long>(batches.size());
        b.images = Tensor({len, ds.height(), ds.width(), ds.channels()});
        b.indices.reserve(static_cast<std::size_t>(len));
        b.labels.reserve(static_cast<std::size_t>(len));
        for (long r = 0; r < len; ++r) {
            const long src = perm[static_cast<std::size_t>(start + r)];
            b.indices.push_back(src);
            b.labels.push_back(ds.labels[static_cast<std::size_t>(src)]);
            std::copy(ds.images.data.begin() + src * px,
                      ds.images.data.begin() + (src + 1) * px,
                      b.images.data.begin() + r * px);
        }
        b.labels_one_hot = one_hot(b.labels, k);
        batches.push_back(std::move(b));
    }
    return batches;
}

// Loads root/{benign,malignant}/* (PNG, PPM or PGM), resizing every image
// to target_h x target_w x target_c with values in [0,1]. Files are taken
// in lexicographic order, benign first, so the sample order is a pure
// function of the directory contents. Undecodable files either abort the
// load (fail_fast) or are skipped with a warning.
inline LabeledDataset load_image_dataset(const std::string& root,
                                         long target_h, long target_w,
                                         long target_c, bool fail_fast = true,
                                         const std::string& split = "") {
    namespace fs = std::filesystem;
    if (!fs::is_directory(root)) {
        throw IoError("dataset root '" + root + "' is not a directory");
    }
    const std::vector<std::string> class_names = {"benign", "malignant"};
    for (const auto& entry : fs::directory_iterator(root)) {
        if (!entry.is_directory()) continue;
        const std::string dir = entry.path().filename().string();
        if (dir.rfind('.', 0) == 0) continue;
        if (dir != "benign" && dir != "malignant") {
            throw LabelingError("unexpected class directory '" + dir +
                                "' under " + root +
                                " (expected benign/ and malignant/)");
        }
    }

    std::vector<Tensor> images;
    std::vector<int> labels;
    for (int cls = 0; cls < 2; ++cls) {
        const fs::path dir = fs::path(root) / class_names[static_cast<std::size_t>(cls)];
        if (!fs::is_directory(dir)) {
            throw LabelingError("missing class directory " + dir.string());
        }
        std::vector<std::string> files;
        for (const auto& entry : fs::directory_iterator(dir)) {
            if (!entry.is_regular_file()) continue;
            const std::string fname = entry.path().filename().string();
            if (fname.rfind('.', 0) == 0) continue;  // lock/temp dotfiles
            files.push_back(entry.path().string());
        }
        std::sort(files.begin(), files.end());
        if (files.empty()) {
            warn("class directory " + dir.string() + " holds no images");
        }
        for (const std::string& file : files) {
            try {
                Tensor img = decode_image(file);
                img = convert_channels(img, target_c);
                img = resize_image(img, target_h, target_w);
                images.push_back(std::move(img));
                labels.push_back(cls);
            } catch (const Error& e) {
                if (fail_fast) throw;
                warn(std::string("skipping ") + file + ": " + e.what());
            }
        }
    }

    LabeledDataset ds;
    ds.split = split;
    ds.labels = std::move(labels);
    if (!images.empty()) {
        const long n = static_cast<long>(images.size());
        ds.images = Tensor({n, target_h, target_w, target_c});
        const long px = target_h * target_w * target_c;
        for (long i = 0; i < n; ++i) {
            std::copy(images[static_cast<std::size_t>(i)].data.begin(),
                      images[static_cast<std::size_t>(i)].data.end(),
                      ds.images.data.begin() + i * px);
        }
    }
    return ds;
}

// Writes a dataset as root/{benign,malignant}/img_NNNN.(pgm|ppm) so the
// directory loader can read it back.
inline void write_image_dataset(const LabeledDataset& ds,
                                const std::string& root) {
    namespace fs = std::filesystem;
    for (const std::string& cls : ds.class_names) {
        fs::create_directories(fs::path(root) / cls);
    }
    const char* ext = ds.channels() == 1 ? ".pgm" : ".ppm";
    std::vector<long> counter(ds.class_names.size(), 0);
    for (long i = 0; i < ds.size(); ++i) {
        const int cls = ds.labels[static_cast<std::size_t>(i)];
        char name[32];
        std::snprintf(name, sizeof(name), "img_%04ld%s",
                      counter[static_cast<std::size_t>(cls)]++, ext);
        const fs::path path =
            fs::path(root) / ds.class_names[static_cast<std::size_t>(cls)] / name;
        Tensor img = ds.image(i).reshaped(
            {ds.height(), ds.width(), ds.channels()});
        encode_pnm(img, path.string());
    }
}

}  // namespace dsnet
