#pragma once

#include <bit>
#include <cstdint>
#include <fstream>
#include <set>
#include <sstream>
#include <string>

#include "dsnet/error.hpp"
#include "dsnet/io_util.hpp"
#include "dsnet/model.hpp"

namespace dsnet {

// .dkpt layout (all integers little-endian):
//   "DKPT" magic, u32 version,
//   u64 text length + that many bytes (model config, name tag, metadata as
//   key=value lines),
//   u64 tensor count, then per tensor: u64 name length + bytes, u64 rank,
//   u64 extents[rank], raw IEEE-754 doubles in row-major order.
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointMeta {
    long epochs = 0;
    std::uint64_t seed = 0;
    std::string config_hash;
};

namespace detail {

inline void put_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    os.write(reinterpret_cast<const char*>(b), 4);
}

inline void put_u64(std::ostream& os, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    os.write(reinterpret_cast<const char*>(b), 8);
}

inline void put_f64(std::ostream& os, double d) {
    put_u64(os, std::bit_cast<std::uint64_t>(d));
}

class CheckpointReader {
public:
    explicit CheckpointReader(const std::string& path) : in_(path, std::ios::binary) {
        if (!in_) throw IoError("cannot open checkpoint " + path);
    }

    void read_bytes(void* dst, std::size_t n) {
        in_.read(reinterpret_cast<char*>(dst),
                 static_cast<std::streamsize>(n));
        if (static_cast<std::size_t>(in_.gcount()) != n) {
            throw CorruptionError("truncated checkpoint file");
        }
    }

    std::uint32_t get_u32() {
        unsigned char b[4];
        read_bytes(b, 4);
        std::uint32_t v = 0;
        for (int i = 3; i >= 0; --i) v = (v << 8) | b[i];
        return v;
    }

    std::uint64_t get_u64() {
        unsigned char b[8];
        read_bytes(b, 8);
        std::uint64_t v = 0;
        for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
        return v;
    }

    double get_f64() { return std::bit_cast<double>(get_u64()); }

    std::string get_string(std::size_t n) {
        std::string s(n, '\0');
        if (n > 0) read_bytes(s.data(), n);
        return s;
    }

    bool at_eof() {
        in_.peek();
        return in_.eof();
    }

private:
    std::ifstream in_;
};

}  // namespace detail

inline void save_checkpoint(Model& model, const std::string& path,
                            const CheckpointMeta& meta = {}) {
    std::ostringstream text;
    text << "name=" << model.name << "\n"
         << "meta.epochs=" << meta.epochs << "\n"
         << "meta.seed=" << meta.seed << "\n"
         << "meta.config_hash=" << meta.config_hash << "\n"
         << model.config.to_text();
    const std::string header = text.str();

    NamedParams params = model.named_parameters();
    AtomicFile file(path);
    std::ostream& os = file.stream();
    os.write("DKPT", 4);
    detail::put_u32(os, kCheckpointVersion);
    detail::put_u64(os, header.size());
    os.write(header.data(), static_cast<std::streamsize>(header.size()));
    detail::put_u64(os, params.size());
    for (const auto& [name, tensor] : params) {
        detail::put_u64(os, name.size());
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        detail::put_u64(os, static_cast<std::uint64_t>(tensor->rank()));
        for (long e : tensor->shape) {
            detail::put_u64(os, static_cast<std::uint64_t>(e));
        }
        for (double d : tensor->data) detail::put_f64(os, d);
    }
    file.commit();
}

inline Model load_checkpoint(const std::string& path,
                             CheckpointMeta* meta_out = nullptr) {
    detail::CheckpointReader in(path);
    char magic[4];
    in.read_bytes(magic, 4);
    if (std::string(magic, 4) != "DKPT") {
        throw FormatError("'" + path + "' is not a DKPT checkpoint (bad magic)");
    }
    const std::uint32_t version = in.get_u32();
    if (version != kCheckpointVersion) {
        throw FormatError("unsupported checkpoint version " +
                          std::to_string(version) + ", this build reads version " +
                          std::to_string(kCheckpointVersion));
    }
    const std::uint64_t header_len = in.get_u64();
    const std::string header = in.get_string(header_len);

    CheckpointMeta meta;
    std::string name = "student";
    std::ostringstream model_text;
    std::istringstream hs(header);
    std::string line;
    try {
        while (std::getline(hs, line)) {
            if (line.rfind("name=", 0) == 0) {
                name = line.substr(5);
            } else if (line.rfind("meta.epochs=", 0) == 0) {
                meta.epochs = std::stol(line.substr(12));
            } else if (line.rfind("meta.seed=", 0) == 0) {
                meta.seed = std::stoull(line.substr(10));
            } else if (line.rfind("meta.config_hash=", 0) == 0) {
                meta.config_hash = line.substr(17);
            } else {
                model_text << line << "\n";
            }
        }
    } catch (const std::invalid_argument&) {
        throw FormatError("bad checkpoint metadata line: " + line);
    } catch (const std::out_of_range&) {
        throw FormatError("checkpoint metadata value out of range: " + line);
    }

    Model model = build_model(ModelConfig::from_text(model_text.str()));
    model.name = name;
    RngState rng(0);
    model.init_params(rng);
    NamedParams params = model.named_parameters();

    const std::uint64_t count = in.get_u64();
    if (count != params.size()) {
        throw CorruptionError("checkpoint holds " + std::to_string(count) +
                              " tensors, model config expects " +
                              std::to_string(params.size()));
    }
    std::set<std::string> seen;
    for (std::uint64_t t = 0; t < count; ++t) {
        const std::uint64_t name_len = in.get_u64();
        const std::string tensor_name = in.get_string(name_len);
        if (!seen.insert(tensor_name).second) {
            throw CorruptionError("checkpoint tensor '" + tensor_name +
                                  "' appears twice");
        }
        const std::uint64_t rank = in.get_u64();
        Shape shape;
        for (std::uint64_t r = 0; r < rank; ++r) {
            shape.push_back(static_cast<long>(in.get_u64()));
        }
        Tensor* dst = nullptr;
        for (auto& [pname, tensor] : params) {
            if (pname == tensor_name) {
                dst = tensor;
                break;
            }
        }
        if (dst == nullptr) {
            throw CorruptionError("checkpoint tensor '" + tensor_name +
                                  "' does not exist in the embedded config");
        }
        if (dst->shape != shape) {
            throw CorruptionError("checkpoint tensor '" + tensor_name +
                                  "' has shape " + shape_to_string(shape) +
                                  ", embedded config expects " +
                                  shape_to_string(dst->shape));
        }
        for (double& d : dst->data) d = in.get_f64();
    }
    if (seen.size() != params.size()) {
        throw CorruptionError("checkpoint is missing tensors");
    }
    if (!in.at_eof()) {
        throw CorruptionError("trailing data after the last tensor");
    }
    if (meta_out != nullptr) *meta_out = meta;
    return model;
}

}  // namespace dsnet
