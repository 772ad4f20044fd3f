#pragma once

#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "dsnet/error.hpp"
#include "dsnet/io_util.hpp"
#include "dsnet/loss.hpp"
#include "dsnet/model.hpp"

namespace dsnet {

// Flat key=value experiment configuration ('#' starts a comment line).
// Unknown keys are rejected so typos fail loudly. See README for the full
// key reference; defaults describe the desk-scale synthetic experiment.
struct ExperimentConfig {
    std::uint64_t seed = 42;
    std::string out_dir = "out";
    long batch_size = 64;
    long teacher_epochs = 15;
    long student_epochs = 20;

    double lr = 0.001;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    KDLossConfig distill;
    // path of a per-sample teacher-logit CSV cache; empty means the teacher
    // is re-run on every batch
    std::string teacher_logits_cache;

    std::string dataset_kind = "synthetic";  // synthetic | directory
    std::string dataset_dir;
    long synth_train_per_class = 200;
    long synth_test_per_class = 100;
    long synth_image_size = 16;
    long synth_channels = 1;
    double synth_noise_std = 0.25;
    long target_h = 224;
    long target_w = 224;
    long target_c = 3;
    bool fail_on_undecodable = true;

    std::vector<long> student_conv_widths = {8, 16, 32};
    std::vector<long> student_dense_widths;
    double student_dropout = 0.25;
    long student_kernel = 3;
    long teacher_width = 12;
    long teacher_blocks = 3;
    long teacher_kernel = 3;

    long input_h() const {
        return dataset_kind == "synthetic" ? synth_image_size : target_h;
    }
    long input_w() const {
        return dataset_kind == "synthetic" ? synth_image_size : target_w;
    }
    long input_c() const {
        return dataset_kind == "synthetic" ? synth_channels : target_c;
    }

    ModelConfig student_model_config() const {
        ModelConfig cfg;
        cfg.kind = "dsnet";
        cfg.input_h = input_h();
        cfg.input_w = input_w();
        cfg.input_c = input_c();
        cfg.conv_widths = student_conv_widths;
        cfg.dense_widths = student_dense_widths;
        cfg.dropout_rate = student_dropout;
        cfg.kernel = student_kernel;
        return cfg;
    }

    ModelConfig teacher_model_config() const {
        ModelConfig cfg;
        cfg.kind = "teacher";
        cfg.input_h = input_h();
        cfg.input_w = input_w();
        cfg.input_c = input_c();
        cfg.conv_widths = {teacher_width};
        cfg.residual_blocks = teacher_blocks;
        cfg.kernel = teacher_kernel;
        cfg.dropout_rate = 0.0;
        return cfg;
    }

    void validate() const {
        if (teacher_epochs < 1 || student_epochs < 1) {
            throw ConfigError("epochs must be >= 1");
        }
        if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
        if (!(lr > 0.0)) throw ConfigError("optim.lr must be > 0");
        if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
            throw ConfigError("optim betas must lie in [0,1)");
        }
        if (!(eps > 0.0)) throw ConfigError("optim.eps must be > 0");
        distill.validate();
        if (dataset_kind != "synthetic" && dataset_kind != "directory") {
            throw ConfigError("dataset.kind must be synthetic or directory");
        }
        if (dataset_kind == "directory" && dataset_dir.empty()) {
            throw ConfigError("dataset.dir is required for a directory "
                              "dataset");
        }
        if (target_c != 1 && target_c != 3) {
            throw ConfigError("dataset.target_channels must be 1 or 3");
        }
        if (synth_train_per_class < 1 || synth_test_per_class < 1) {
            throw ConfigError("synthetic per-class counts must be >= 1");
        }
    }
};

inline std::string bool_to_text(bool b) { return b ? "true" : "false"; }

inline bool parse_bool(const std::string& key, const std::string& value) {
    if (value == "true") return true;
    if (value == "false") return false;
    throw ConfigError(key + " must be true or false, got '" + value + "'");
}

// Canonical text form: fixed key order, %.17g doubles. Checkpoint metadata
// and sweep-isolation hashes are taken over exactly this text.
inline std::string config_to_text(const ExperimentConfig& c) {
    std::ostringstream os;
    os << "seed=" << c.seed << "\n"
       << "out_dir=" << c.out_dir << "\n"
       << "batch_size=" << c.batch_size << "\n"
       << "teacher.epochs=" << c.teacher_epochs << "\n"
       << "student.epochs=" << c.student_epochs << "\n"
       << "optim.lr=" << format_double(c.lr) << "\n"
       << "optim.beta1=" << format_double(c.beta1) << "\n"
       << "optim.beta2=" << format_double(c.beta2) << "\n"
       << "optim.eps=" << format_double(c.eps) << "\n"
       << "distill.temperature=" << format_double(c.distill.temperature) << "\n"
       << "distill.alpha=" << format_double(c.distill.alpha) << "\n"
       << "distill.t_squared=" << bool_to_text(c.distill.t_squared_scaling) << "\n"
       << "distill.hard_term_uses_T="
       << bool_to_text(c.distill.hard_term_uses_temperature) << "\n"
       << "distill.teacher_logits_cache=" << c.teacher_logits_cache << "\n"
       << "dataset.kind=" << c.dataset_kind << "\n"
       << "dataset.dir=" << c.dataset_dir << "\n"
       << "dataset.synth.train_per_class=" << c.synth_train_per_class << "\n"
       << "dataset.synth.test_per_class=" << c.synth_test_per_class << "\n"
       << "dataset.synth.image_size=" << c.synth_image_size << "\n"
       << "dataset.synth.channels=" << c.synth_channels << "\n"
       << "dataset.synth.noise_std=" << format_double(c.synth_noise_std) << "\n"
       << "dataset.target_height=" << c.target_h << "\n"
       << "dataset.target_width=" << c.target_w << "\n"
       << "dataset.target_channels=" << c.target_c << "\n"
       << "dataset.on_undecodable=" << (c.fail_on_undecodable ? "fail" : "skip")
       << "\n"
       << "student.conv_widths=" << join_longs(c.student_conv_widths) << "\n"
       << "student.dense_widths=" << join_longs(c.student_dense_widths) << "\n"
       << "student.dropout=" << format_double(c.student_dropout) << "\n"
       << "student.kernel=" << c.student_kernel << "\n"
       << "teacher.width=" << c.teacher_width << "\n"
       << "teacher.blocks=" << c.teacher_blocks << "\n"
       << "teacher.kernel=" << c.teacher_kernel << "\n";
    return os.str();
}

inline void apply_config_line(ExperimentConfig& c, const std::string& key,
                              const std::string& value) {
    try {
        if (key == "seed") c.seed = std::stoull(value);
        else if (key == "out_dir") c.out_dir = value;
        else if (key == "batch_size") c.batch_size = std::stol(value);
        else if (key == "teacher.epochs") c.teacher_epochs = std::stol(value);
        else if (key == "student.epochs") c.student_epochs = std::stol(value);
        else if (key == "optim.lr") c.lr = std::stod(value);
        else if (key == "optim.beta1") c.beta1 = std::stod(value);
        else if (key == "optim.beta2") c.beta2 = std::stod(value);
        else if (key == "optim.eps") c.eps = std::stod(value);
        else if (key == "distill.temperature") c.distill.temperature = std::stod(value);
        else if (key == "distill.alpha") c.distill.alpha = std::stod(value);
        else if (key == "distill.t_squared") c.distill.t_squared_scaling = parse_bool(key, value);
        else if (key == "distill.hard_term_uses_T") c.distill.hard_term_uses_temperature = parse_bool(key, value);
        else if (key == "distill.teacher_logits_cache") c.teacher_logits_cache = value;
        else if (key == "dataset.kind") c.dataset_kind = value;
        else if (key == "dataset.dir") c.dataset_dir = value;
        else if (key == "dataset.synth.train_per_class") c.synth_train_per_class = std::stol(value);
        else if (key == "dataset.synth.test_per_class") c.synth_test_per_class = std::stol(value);
        else if (key == "dataset.synth.image_size") c.synth_image_size = std::stol(value);
        else if (key == "dataset.synth.channels") c.synth_channels = std::stol(value);
        else if (key == "dataset.synth.noise_std") c.synth_noise_std = std::stod(value);
        else if (key == "dataset.target_height") c.target_h = std::stol(value);
        else if (key == "dataset.target_width") c.target_w = std::stol(value);
        else if (key == "dataset.target_channels") c.target_c = std::stol(value);
        else if (key == "dataset.on_undecodable") {
            if (value == "fail") c.fail_on_undecodable = true;
            else if (value == "skip") c.fail_on_undecodable = false;
            else throw ConfigError("dataset.on_undecodable must be fail or skip");
        }
        else if (key == "student.conv_widths") c.student_conv_widths = parse_longs(value);
        else if (key == "student.dense_widths") c.student_dense_widths = parse_longs(value);
        else if (key == "student.dropout") c.student_dropout = std::stod(value);
        else if (key == "student.kernel") c.student_kernel = std::stol(value);
        else if (key == "teacher.width") c.teacher_width = std::stol(value);
        else if (key == "teacher.blocks") c.teacher_blocks = std::stol(value);
        else if (key == "teacher.kernel") c.teacher_kernel = std::stol(value);
        else throw ConfigError("unknown config key '" + key + "'");
    } catch (const std::invalid_argument&) {
        throw ConfigError("cannot parse value '" + value + "' for key '" +
                          key + "'");
    } catch (const std::out_of_range&) {
        throw ConfigError("value '" + value + "' out of range for key '" +
                          key + "'");
    }
}

inline ExperimentConfig parse_config_text(const std::string& text) {
    ExperimentConfig c;
    std::istringstream is(text);
    std::string line;
    long line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos) continue;
        const auto last = line.find_last_not_of(" \t\r");
        line = line.substr(first, last - first + 1);
        if (line.empty() || line[0] == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("config line " + std::to_string(line_no) +
                              " is not key=value: " + line);
        }
        apply_config_line(c, line.substr(0, eq), line.substr(eq + 1));
    }
    return c;
}

inline ExperimentConfig load_config_file(const std::string& path) {
    return parse_config_text(read_file(path));
}

inline std::uint64_t fnv1a64(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

inline std::string hash_hex(std::uint64_t h) {
    static const char* digits = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<std::size_t>(i)] = digits[h & 0xf];
        h >>= 4;
    }
    return out;
}

inline std::string config_hash(const ExperimentConfig& c) {
    return hash_hex(fnv1a64(config_to_text(c)));
}

// Hash over every config field except the named keys; sweep records carry
// this so a reader can verify points differ only in the swept variable.
inline std::string config_hash_excluding(const ExperimentConfig& c,
                                         const std::vector<std::string>& keys) {
    std::istringstream is(config_to_text(c));
    std::ostringstream kept;
    std::string line;
    while (std::getline(is, line)) {
        const auto eq = line.find('=');
        const std::string key = line.substr(0, eq);
        bool skip = false;
        for (const std::string& k : keys) {
            if (key == k) {
                skip = true;
                break;
            }
        }
        if (!skip) kept << line << "\n";
    }
    return hash_hex(fnv1a64(kept.str()));
}

}  // namespace dsnet
