#pragma once

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "dsnet/checkpoint.hpp"
#include "dsnet/config.hpp"
#include "dsnet/dataset.hpp"
#include "dsnet/train.hpp"

namespace dsnet {

struct DatasetPair {
    LabeledDataset train;
    LabeledDataset test;
};

inline DatasetPair load_datasets(const ExperimentConfig& cfg) {
    cfg.validate();
    if (cfg.dataset_kind == "synthetic") {
        return {synth_blobs(cfg.synth_train_per_class, cfg.synth_image_size,
                            cfg.synth_noise_std, cfg.seed, cfg.synth_channels,
                            "train"),
                synth_blobs(cfg.synth_test_per_class, cfg.synth_image_size,
                            cfg.synth_noise_std, cfg.seed, cfg.synth_channels,
                            "test")};
    }
    namespace fs = std::filesystem;
    return {load_image_dataset((fs::path(cfg.dataset_dir) / "train").string(),
                               cfg.target_h, cfg.target_w, cfg.target_c,
                               cfg.fail_on_undecodable, "train"),
            load_image_dataset((fs::path(cfg.dataset_dir) / "test").string(),
                               cfg.target_h, cfg.target_w, cfg.target_c,
                               cfg.fail_on_undecodable, "test")};
}

inline void check_model_matches_dataset(const Model& m,
                                        const ExperimentConfig& cfg) {
    if (m.config.input_h != cfg.input_h() ||
        m.config.input_w != cfg.input_w() ||
        m.config.input_c != cfg.input_c()) {
        throw ConfigError("model " + m.name + " expects input " +
                          std::to_string(m.config.input_h) + "x" +
                          std::to_string(m.config.input_w) + "x" +
                          std::to_string(m.config.input_c) +
                          ", dataset provides " +
                          std::to_string(cfg.input_h()) + "x" +
                          std::to_string(cfg.input_w()) + "x" +
                          std::to_string(cfg.input_c()));
    }
}

inline nlohmann::json model_json(const Model& m) {
    return {{"name", m.name},
            {"kind", m.config.kind},
            {"parameters", count_parameters(m)}};
}

inline std::string roc_csv_text(const std::vector<RocPoint>& curve) {
    std::string out = "threshold,fpr,tpr\n";
    for (const RocPoint& p : curve) {
        out += format_double(p.threshold);
        out += ",";
        out += format_double(p.fpr);
        out += ",";
        out += format_double(p.tpr);
        out += "\n";
    }
    return out;
}

// Standalone SVG line plot of a ROC curve: axes, the chance diagonal and
// the curve itself. No plotting dependency.
inline std::string roc_svg_text(const std::vector<RocPoint>& curve,
                                double auc) {
    const double size = 480.0, margin = 48.0;
    const double span = size - 2 * margin;
    auto px = [&](double fpr) { return margin + fpr * span; };
    auto py = [&](double tpr) { return size - margin - tpr * span; };
    char buf[160];
    std::string svg =
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"480\" "
        "height=\"480\" viewBox=\"0 0 480 480\">\n"
        "<rect x=\"48\" y=\"48\" width=\"384\" height=\"384\" fill=\"white\" "
        "stroke=\"black\"/>\n"
        "<line x1=\"48\" y1=\"432\" x2=\"432\" y2=\"48\" stroke=\"#999\" "
        "stroke-dasharray=\"6,4\"/>\n";
    svg += "<polyline fill=\"none\" stroke=\"#1f5fbf\" stroke-width=\"2\" "
           "points=\"";
    for (const RocPoint& p : curve) {
        std::snprintf(buf, sizeof(buf), "%.2f,%.2f ", px(p.fpr), py(p.tpr));
        svg += buf;
    }
    svg += "\"/>\n";
    std::snprintf(buf, sizeof(buf),
                  "<text x=\"240\" y=\"24\" text-anchor=\"middle\" "
                  "font-family=\"sans-serif\" font-size=\"14\">ROC curve "
                  "(AUC %.4f)</text>\n",
                  auc);
    svg += buf;
    svg += "<text x=\"240\" y=\"470\" text-anchor=\"middle\" "
           "font-family=\"sans-serif\" font-size=\"12\">false positive "
           "rate</text>\n"
           "<text x=\"14\" y=\"240\" text-anchor=\"middle\" "
           "font-family=\"sans-serif\" font-size=\"12\" "
           "transform=\"rotate(-90 14 240)\">true positive rate</text>\n"
           "</svg>\n";
    return svg;
}

struct CommandResult {
    std::string checkpoint;
    MetricsReport report;
    nlohmann::json report_json;
};

inline void write_report(const nlohmann::json& j, const std::string& path) {
    atomic_write_file(path, j.dump(2) + "\n");
}

inline CommandResult cmd_train_teacher(const ExperimentConfig& cfg) {
    cfg.validate();
    DirectoryLock lock(cfg.out_dir);
    DatasetPair data = load_datasets(cfg);
    Model teacher = build_teacher(cfg.teacher_model_config());

    TrainStats stats = train_model(teacher, data.train, cfg,
                                   cfg.teacher_epochs, cfg.batch_size);
    EvalResult ev = evaluate_model(teacher, data.test, cfg.batch_size);
    ev.report.train_seconds = stats.train_seconds;

    namespace fs = std::filesystem;
    CommandResult res;
    res.checkpoint = (fs::path(cfg.out_dir) / "teacher.dkpt").string();
    CheckpointMeta meta{cfg.teacher_epochs, cfg.seed, config_hash(cfg)};
    save_checkpoint(teacher, res.checkpoint, meta);

    res.report = ev.report;
    res.report_json = {{"schema_version", 1},
                       {"command", "train-teacher"},
                       {"seed", cfg.seed},
                       {"config_hash", config_hash(cfg)},
                       {"epochs", cfg.teacher_epochs},
                       {"model", model_json(teacher)},
                       {"checkpoint", res.checkpoint},
                       {"metrics", metrics_to_json(ev.report)}};
    write_report(res.report_json,
                 (fs::path(cfg.out_dir) / "report.json").string());
    return res;
}

// Resolves the teacher-logit source for a distillation run: either the
// teacher model itself (recompute per batch, the default) or a per-sample
// cache, loaded from `cache_path` when present and written there otherwise.
struct TeacherLogitSource {
    Model* teacher = nullptr;
    Tensor cached;
    bool use_cache = false;
};

inline TeacherLogitSource make_logit_source(Model& teacher,
                                            const LabeledDataset& train,
                                            const ExperimentConfig& cfg) {
    TeacherLogitSource src;
    src.teacher = &teacher;
    if (cfg.teacher_logits_cache.empty()) return src;
    src.use_cache = true;
    if (std::filesystem::exists(cfg.teacher_logits_cache)) {
        src.cached = load_logits_csv(cfg.teacher_logits_cache, train.size(),
                                     teacher.num_classes());
    } else {
        src.cached = teacher_logits_all(teacher, train, cfg.batch_size);
        save_logits_csv(src.cached, cfg.teacher_logits_cache);
    }
    return src;
}

inline CommandResult cmd_distill(const ExperimentConfig& cfg,
                                 const std::string& teacher_checkpoint) {
    cfg.validate();
    DirectoryLock lock(cfg.out_dir);
    DatasetPair data = load_datasets(cfg);

    Model teacher = load_checkpoint(teacher_checkpoint);
    check_model_matches_dataset(teacher, cfg);
    Model student = build_dsnet(cfg.student_model_config());
    if (teacher.num_classes() != student.num_classes()) {
        throw ConfigError("teacher has " +
                          std::to_string(teacher.num_classes()) +
                          " classes, student has " +
                          std::to_string(student.num_classes()));
    }

    TeacherLogitSource src = make_logit_source(teacher, data.train, cfg);
    TrainStats stats = train_model(
        student, data.train, cfg, cfg.student_epochs, cfg.batch_size,
        src.use_cache ? nullptr : src.teacher,
        src.use_cache ? &src.cached : nullptr);
    EvalResult ev = evaluate_model(student, data.test, cfg.batch_size);
    ev.report.train_seconds = stats.train_seconds;

    namespace fs = std::filesystem;
    CommandResult res;
    res.checkpoint = (fs::path(cfg.out_dir) / "student.dkpt").string();
    CheckpointMeta meta{cfg.student_epochs, cfg.seed, config_hash(cfg)};
    save_checkpoint(student, res.checkpoint, meta);

    res.report = ev.report;
    res.report_json = {
        {"schema_version", 1},
        {"command", "distill"},
        {"seed", cfg.seed},
        {"config_hash", config_hash(cfg)},
        {"epochs", cfg.student_epochs},
        {"model", model_json(student)},
        {"checkpoint", res.checkpoint},
        {"distillation",
         {{"temperature", cfg.distill.temperature},
          {"alpha", cfg.distill.alpha},
          {"t_squared_scaling", cfg.distill.t_squared_scaling},
          {"hard_term_uses_temperature",
           cfg.distill.hard_term_uses_temperature},
          {"teacher_checkpoint", teacher_checkpoint},
          {"teacher_parameters", count_parameters(teacher)},
          {"student_parameters", count_parameters(student)}}},
        {"metrics", metrics_to_json(ev.report)}};
    write_report(res.report_json,
                 (fs::path(cfg.out_dir) / "report.json").string());
    return res;
}

inline CommandResult cmd_evaluate(const std::string& checkpoint,
                                  const ExperimentConfig& cfg,
                                  const std::string& split = "test") {
    cfg.validate();
    if (split != "train" && split != "test") {
        throw ConfigError("split must be train or test, got '" + split + "'");
    }
    DirectoryLock lock(cfg.out_dir);
    Model model = load_checkpoint(checkpoint);
    check_model_matches_dataset(model, cfg);
    DatasetPair data = load_datasets(cfg);
    const LabeledDataset& ds = split == "train" ? data.train : data.test;

    EvalResult ev = evaluate_model(model, ds, cfg.batch_size);

    namespace fs = std::filesystem;
    CommandResult res;
    res.checkpoint = checkpoint;
    res.report = ev.report;
    res.report_json = {{"schema_version", 1},
                       {"command", "evaluate"},
                       {"seed", cfg.seed},
                       {"config_hash", config_hash(cfg)},
                       {"checkpoint", checkpoint},
                       {"model", model_json(model)},
                       {"metrics", metrics_to_json(ev.report)}};
    write_report(res.report_json,
                 (fs::path(cfg.out_dir) / "report.json").string());
    if (!ev.roc.empty()) {
        atomic_write_file((fs::path(cfg.out_dir) / "roc.csv").string(),
                          roc_csv_text(ev.roc));
        atomic_write_file((fs::path(cfg.out_dir) / "roc.svg").string(),
                          roc_svg_text(ev.roc, ev.report.auc));
    } else {
        warn("AUC undefined on a single-class split; skipping roc.csv and "
             "roc.svg");
    }
    return res;
}

struct SweepRecord {
    std::string swept;  // "temperature" | "batch_size"
    double value = 0.0;
    double accuracy = 0.0;
    double train_seconds = 0.0;
    double predict_seconds = 0.0;
    std::string checkpoint;
    std::string config_hash;  // over all non-swept config fields
};

struct SweepResult {
    std::vector<SweepRecord> records;
    std::string sweep_json_path;
    std::string probe_csv_path;  // temperature sweep only
};

namespace detail {

inline nlohmann::json sweep_records_json(const std::vector<SweepRecord>& recs) {
    nlohmann::json arr = nlohmann::json::array();
    for (const SweepRecord& r : recs) {
        arr.push_back({{"swept", r.swept},
                       {"value", r.value},
                       {"accuracy", r.accuracy},
                       {"train_seconds", round_hundredth(r.train_seconds)},
                       {"predict_seconds", round_hundredth(r.predict_seconds)},
                       {"checkpoint", r.checkpoint},
                       {"config_hash", r.config_hash}});
    }
    return arr;
}

inline void print_sweep_table(const std::vector<SweepRecord>& recs) {
    if (recs.empty()) return;
    std::printf("%-12s %-10s %-10s %-11s %s\n", recs[0].swept.c_str(),
                "accuracy", "train_s", "predict_s", "checkpoint");
    for (const SweepRecord& r : recs) {
        std::printf("%-12g %-10.4f %-10.2f %-11.2f %s\n", r.value, r.accuracy,
                    r.train_seconds, r.predict_seconds, r.checkpoint.c_str());
    }
}

// Mean softened probability per class and mean row entropy of a logit batch
// at one temperature.
inline void probe_row(const Tensor& logits, double temperature,
                      std::vector<double>& mean_probs, double& mean_entropy) {
    const Tensor probs = softmax_with_temperature(logits, temperature);
    const long n = probs.shape[0], k = probs.shape[1];
    mean_probs.assign(static_cast<std::size_t>(k), 0.0);
    mean_entropy = 0.0;
    for (long i = 0; i < n; ++i) {
        for (long j = 0; j < k; ++j) {
            const double p = probs.at(i, j);
            mean_probs[static_cast<std::size_t>(j)] += p;
            if (p > 0.0) mean_entropy -= p * std::log(p);
        }
    }
    for (double& m : mean_probs) m /= static_cast<double>(n);
    mean_entropy /= static_cast<double>(n);
}

// Loads the teacher from `teacher_checkpoint`, or trains one per the config
// when the path is empty (its checkpoint then lands in the output
// directory). Assumes the caller already holds the output-directory lock.
inline Model obtain_teacher(const ExperimentConfig& cfg,
                            const std::string& teacher_checkpoint,
                            const DatasetPair& data) {
    if (!teacher_checkpoint.empty()) {
        Model teacher = load_checkpoint(teacher_checkpoint);
        check_model_matches_dataset(teacher, cfg);
        return teacher;
    }
    std::cout << "no teacher checkpoint given; training one first"
              << std::endl;
    Model teacher = build_teacher(cfg.teacher_model_config());
    train_model(teacher, data.train, cfg, cfg.teacher_epochs, cfg.batch_size);
    namespace fs = std::filesystem;
    CheckpointMeta meta{cfg.teacher_epochs, cfg.seed, config_hash(cfg)};
    save_checkpoint(teacher,
                    (fs::path(cfg.out_dir) / "teacher.dkpt").string(), meta);
    return teacher;
}

}  // namespace detail

// One full distillation per temperature with an identical seed and data
// order; also emits the softened-probability probe (mean per-class teacher
// probability and entropy over a fixed test batch at each temperature) as
// fig6_probe.csv.
inline SweepResult cmd_sweep_temperature(
    const ExperimentConfig& cfg, std::vector<double> t_list,
    const std::string& teacher_checkpoint = "") {
    cfg.validate();
    if (t_list.empty()) throw DomainError("temperature list is empty");
    for (double t : t_list) {
        if (!(t > 0.0)) {
            throw DomainError("temperatures must be > 0, got " +
                              std::to_string(t));
        }
    }
    std::sort(t_list.begin(), t_list.end());

    DirectoryLock lock(cfg.out_dir);
    DatasetPair data = load_datasets(cfg);
    Model teacher = detail::obtain_teacher(cfg, teacher_checkpoint, data);

    namespace fs = std::filesystem;
    SweepResult result;

    // probe batch: the first test samples, teacher logits in eval mode
    const long probe_n = std::min<long>(32, data.test.size());
    Tensor probe_images({probe_n, data.test.height(), data.test.width(),
                         data.test.channels()});
    std::copy(data.test.images.data.begin(),
              data.test.images.data.begin() + probe_images.numel(),
              probe_images.data.begin());
    const Tensor probe_logits = teacher.forward(probe_images, Mode::eval);
    std::string probe_csv = "temperature";
    for (const std::string& name : data.test.class_names) {
        probe_csv += ",mean_prob_" + name;
    }
    probe_csv += ",mean_entropy\n";

    TeacherLogitSource src = make_logit_source(teacher, data.train, cfg);
    for (double t : t_list) {
        ExperimentConfig point = cfg;
        point.distill.temperature = t;

        Model student = build_dsnet(point.student_model_config());
        TrainStats stats = train_model(
            student, data.train, point, point.student_epochs,
            point.batch_size, src.use_cache ? nullptr : src.teacher,
            src.use_cache ? &src.cached : nullptr);
        EvalResult ev = evaluate_model(student, data.test, point.batch_size);

        char tag[32];
        std::snprintf(tag, sizeof(tag), "%g", t);
        const std::string ckpt =
            (fs::path(cfg.out_dir) / ("student_T" + std::string(tag) + ".dkpt"))
                .string();
        CheckpointMeta meta{point.student_epochs, point.seed,
                            config_hash(point)};
        save_checkpoint(student, ckpt, meta);

        SweepRecord rec;
        rec.swept = "temperature";
        rec.value = t;
        rec.accuracy = ev.report.accuracy;
        rec.train_seconds = stats.train_seconds;
        rec.predict_seconds = ev.report.predict_seconds;
        rec.checkpoint = ckpt;
        rec.config_hash =
            config_hash_excluding(point, {"distill.temperature"});
        result.records.push_back(rec);

        std::vector<double> mean_probs;
        double mean_entropy = 0.0;
        detail::probe_row(probe_logits, t, mean_probs, mean_entropy);
        probe_csv += format_double(t);
        for (double m : mean_probs) {
            probe_csv += ",";
            probe_csv += format_double(m);
        }
        probe_csv += ",";
        probe_csv += format_double(mean_entropy);
        probe_csv += "\n";
    }

    result.probe_csv_path = (fs::path(cfg.out_dir) / "fig6_probe.csv").string();
    atomic_write_file(result.probe_csv_path, probe_csv);
    result.sweep_json_path = (fs::path(cfg.out_dir) / "sweep.json").string();
    nlohmann::json j{{"schema_version", 1},
                     {"sweep", "temperature"},
                     {"records", detail::sweep_records_json(result.records)}};
    write_report(j, result.sweep_json_path);
    detail::print_sweep_table(result.records);
    return result;
}

inline SweepResult cmd_sweep_batch(const ExperimentConfig& cfg,
                                   std::vector<long> batch_list,
                                   const std::string& teacher_checkpoint = "") {
    cfg.validate();
    if (batch_list.empty()) throw DomainError("batch list is empty");
    for (long b : batch_list) {
        if (b < 1) {
            throw DomainError("batch sizes must be >= 1, got " +
                              std::to_string(b));
        }
    }
    std::sort(batch_list.begin(), batch_list.end());

    DirectoryLock lock(cfg.out_dir);
    DatasetPair data = load_datasets(cfg);
    Model teacher = detail::obtain_teacher(cfg, teacher_checkpoint, data);

    namespace fs = std::filesystem;
    SweepResult result;
    TeacherLogitSource src = make_logit_source(teacher, data.train, cfg);
    for (long b : batch_list) {
        ExperimentConfig point = cfg;
        point.batch_size = b;

        Model student = build_dsnet(point.student_model_config());
        TrainStats stats = train_model(
            student, data.train, point, point.student_epochs, b,
            src.use_cache ? nullptr : src.teacher,
            src.use_cache ? &src.cached : nullptr);
        EvalResult ev = evaluate_model(student, data.test, point.batch_size);

        const std::string ckpt =
            (fs::path(cfg.out_dir) /
             ("student_B" + std::to_string(b) + ".dkpt"))
                .string();
        CheckpointMeta meta{point.student_epochs, point.seed,
                            config_hash(point)};
        save_checkpoint(student, ckpt, meta);

        SweepRecord rec;
        rec.swept = "batch_size";
        rec.value = static_cast<double>(b);
        rec.accuracy = ev.report.accuracy;
        rec.train_seconds = stats.train_seconds;
        rec.predict_seconds = ev.report.predict_seconds;
        rec.checkpoint = ckpt;
        rec.config_hash = config_hash_excluding(point, {"batch_size"});
        result.records.push_back(rec);
    }

    result.sweep_json_path = (fs::path(cfg.out_dir) / "sweep.json").string();
    nlohmann::json j{{"schema_version", 1},
                     {"sweep", "batch_size"},
                     {"records", detail::sweep_records_json(result.records)}};
    write_report(j, result.sweep_json_path);
    detail::print_sweep_table(result.records);
    return result;
}

struct PredictResult {
    int label = 0;
    std::string class_name;
    std::vector<double> probabilities;
};

inline PredictResult cmd_predict(const std::string& checkpoint,
                                 const std::string& image_path) {
    Model model = load_checkpoint(checkpoint);
    Tensor img;
    try {
        img = decode_image(image_path);
    } catch (const FormatError& e) {
        throw IoError(std::string("cannot decode image: ") + e.what());
    } catch (const CorruptionError& e) {
        throw IoError(std::string("cannot decode image: ") + e.what());
    }
    img = convert_channels(img, model.config.input_c);
    img = resize_image(img, model.config.input_h, model.config.input_w);
    Tensor batch = img.reshaped(
        {1, model.config.input_h, model.config.input_w, model.config.input_c});

    Tensor probs =
        softmax_with_temperature(model.forward(batch, Mode::eval), 1.0);
    PredictResult res;
    const long k = model.num_classes();
    res.probabilities.resize(static_cast<std::size_t>(k));
    for (long j = 0; j < k; ++j) {
        res.probabilities[static_cast<std::size_t>(j)] = probs.at(0L, j);
    }
    // tie-break: the lower class index wins
    for (long j = 1; j < k; ++j) {
        if (res.probabilities[static_cast<std::size_t>(j)] >
            res.probabilities[static_cast<std::size_t>(res.label)]) {
            res.label = static_cast<int>(j);
        }
    }
    static const std::vector<std::string> names = {"benign", "malignant"};
    res.class_name = res.label < 2 && k == 2
                         ? names[static_cast<std::size_t>(res.label)]
                         : "class_" + std::to_string(res.label);
    return res;
}

inline void cmd_gen_synth(const std::string& out_dir, long train_per_class,
                          long test_per_class, long image_size, long channels,
                          double noise_std, std::uint64_t seed) {
    namespace fs = std::filesystem;
    const LabeledDataset train = synth_blobs(train_per_class, image_size,
                                             noise_std, seed, channels,
                                             "train");
    const LabeledDataset test = synth_blobs(test_per_class, image_size,
                                            noise_std, seed, channels, "test");
    write_image_dataset(train, (fs::path(out_dir) / "train").string());
    write_image_dataset(test, (fs::path(out_dir) / "test").string());
    std::cout << "wrote " << train.size() << " train and " << test.size()
              << " test images under " << out_dir << std::endl;
}

}  // namespace dsnet
