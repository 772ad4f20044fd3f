// dsnet command-line driver: teacher training, distillation, evaluation,
// temperature/batch sweeps, single-image prediction and synthetic dataset
// generation. See README for the config file format.

#include <cstdio>
#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dsnet/dsnet.hpp"

namespace {

struct CommonOpts {
    std::string config_path;
    std::string out_dir;
    std::uint64_t seed = 0;
    bool seed_set = false;
};

void add_common(CLI::App* cmd, CommonOpts& opts, bool config_required = true) {
    auto* c = cmd->add_option("-c,--config", opts.config_path,
                              "experiment config file (key=value lines)");
    if (config_required) c->required();
    cmd->add_option("-o,--out", opts.out_dir,
                    "output directory (overrides out_dir in the config)");
    cmd->add_option("--seed", opts.seed, "seed override")
        ->each([&opts](const std::string&) { opts.seed_set = true; });
}

dsnet::ExperimentConfig resolve_config(const CommonOpts& opts) {
    dsnet::ExperimentConfig cfg = opts.config_path.empty()
                                      ? dsnet::ExperimentConfig{}
                                      : dsnet::load_config_file(opts.config_path);
    if (!opts.out_dir.empty()) cfg.out_dir = opts.out_dir;
    if (opts.seed_set) cfg.seed = opts.seed;
    return cfg;
}

std::vector<double> parse_double_list(const std::string& csv) {
    std::vector<double> out;
    std::istringstream is(csv);
    std::string item;
    while (std::getline(is, item, ',')) {
        if (item.empty()) continue;
        try {
            out.push_back(std::stod(item));
        } catch (const std::exception&) {
            throw dsnet::ConfigError("cannot parse list entry '" + item + "'");
        }
    }
    return out;
}

void print_metrics_summary(const dsnet::MetricsReport& rep) {
    std::printf("split=%s accuracy=%.4f", rep.split.c_str(), rep.accuracy);
    if (rep.auc_defined) std::printf(" auc=%.4f", rep.auc);
    std::printf("\n");
    for (std::size_t c = 0; c < rep.class_names.size(); ++c) {
        std::printf("  %-9s precision=%.4f recall=%.4f f1=%.4f\n",
                    rep.class_names[c].c_str(), rep.per_class[c].precision,
                    rep.per_class[c].recall, rep.per_class[c].f1);
    }
    std::printf("  train %.2f s, predict %.2f s\n", rep.train_seconds,
                rep.predict_seconds);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"dsnet: knowledge-distillation training and evaluation for "
                 "binary lesion classification"};
    app.require_subcommand(1);

    CommonOpts train_opts, distill_opts, eval_opts, sweep_t_opts, sweep_b_opts;
    std::string teacher_ckpt, eval_ckpt, eval_split = "test";
    std::string predict_ckpt, predict_image;
    std::string t_list_csv = "3,5,7,10,20,50,70,90,100";
    std::string batch_list_csv = "18,32,64,96";
    std::string sweep_teacher_t, sweep_teacher_b;

    std::string synth_out = "synth";
    long synth_train = 200, synth_test = 100, synth_size = 16,
         synth_channels = 1;
    double synth_noise = 0.08;
    std::uint64_t synth_seed = 42;

    auto* train_cmd = app.add_subcommand(
        "train-teacher", "train the residual teacher on hard labels");
    add_common(train_cmd, train_opts);

    auto* distill_cmd = app.add_subcommand(
        "distill", "train the DSNet student against a frozen teacher");
    add_common(distill_cmd, distill_opts);
    distill_cmd->add_option("-t,--teacher", teacher_ckpt,
                            "teacher checkpoint (.dkpt)")
        ->required();

    auto* eval_cmd = app.add_subcommand(
        "evaluate", "metrics, ROC CSV and ROC SVG for a checkpoint");
    add_common(eval_cmd, eval_opts);
    eval_cmd->add_option("-k,--checkpoint", eval_ckpt, "model checkpoint")
        ->required();
    eval_cmd->add_option("--split", eval_split, "train or test (default test)");

    auto* sweep_t_cmd = app.add_subcommand(
        "sweep-temperature", "one full distillation per temperature");
    add_common(sweep_t_cmd, sweep_t_opts);
    sweep_t_cmd->add_option("--t-list", t_list_csv,
                            "comma-separated temperatures");
    sweep_t_cmd->add_option("-t,--teacher", sweep_teacher_t,
                            "teacher checkpoint (trained fresh when omitted)");

    auto* sweep_b_cmd = app.add_subcommand(
        "sweep-batch", "one full distillation per batch size");
    add_common(sweep_b_cmd, sweep_b_opts);
    sweep_b_cmd->add_option("--batch-list", batch_list_csv,
                            "comma-separated batch sizes");
    sweep_b_cmd->add_option("-t,--teacher", sweep_teacher_b,
                            "teacher checkpoint (trained fresh when omitted)");

    auto* predict_cmd = app.add_subcommand(
        "predict", "classify one image with a trained checkpoint");
    predict_cmd->add_option("-k,--checkpoint", predict_ckpt, "model checkpoint")
        ->required();
    predict_cmd->add_option("-i,--image", predict_image, "image file")
        ->required();

    auto* synth_cmd = app.add_subcommand(
        "gen-synth", "write a synthetic blob dataset as image files");
    synth_cmd->add_option("-o,--out", synth_out, "output directory");
    synth_cmd->add_option("--train-per-class", synth_train,
                          "training images per class");
    synth_cmd->add_option("--test-per-class", synth_test,
                          "test images per class");
    synth_cmd->add_option("--size", synth_size, "square image size in pixels");
    synth_cmd->add_option("--channels", synth_channels, "1 (gray) or 3 (rgb)");
    synth_cmd->add_option("--noise-std", synth_noise,
                          "gaussian pixel noise standard deviation");
    synth_cmd->add_option("--seed", synth_seed, "generator seed");

    CLI11_PARSE(app, argc, argv);

    try {
        if (train_cmd->parsed()) {
            auto res = dsnet::cmd_train_teacher(resolve_config(train_opts));
            std::printf("teacher checkpoint: %s\n", res.checkpoint.c_str());
            print_metrics_summary(res.report);
        } else if (distill_cmd->parsed()) {
            auto res = dsnet::cmd_distill(resolve_config(distill_opts),
                                          teacher_ckpt);
            std::printf("student checkpoint: %s\n", res.checkpoint.c_str());
            print_metrics_summary(res.report);
        } else if (eval_cmd->parsed()) {
            auto res = dsnet::cmd_evaluate(eval_ckpt,
                                           resolve_config(eval_opts),
                                           eval_split);
            print_metrics_summary(res.report);
        } else if (sweep_t_cmd->parsed()) {
            dsnet::cmd_sweep_temperature(resolve_config(sweep_t_opts),
                                         parse_double_list(t_list_csv),
                                         sweep_teacher_t);
        } else if (sweep_b_cmd->parsed()) {
            std::vector<long> batches;
            for (double v : parse_double_list(batch_list_csv)) {
                batches.push_back(static_cast<long>(v));
            }
            dsnet::cmd_sweep_batch(resolve_config(sweep_b_opts), batches,
                                   sweep_teacher_b);
        } else if (predict_cmd->parsed()) {
            auto res = dsnet::cmd_predict(predict_ckpt, predict_image);
            for (std::size_t j = 0; j < res.probabilities.size(); ++j) {
                const std::string name =
                    res.probabilities.size() == 2
                        ? (j == 0 ? "benign" : "malignant")
                        : "class_" + std::to_string(j);
                std::printf("p(%s)=%.4f\n", name.c_str(),
                            res.probabilities[j]);
            }
            std::printf("label: %s\n", res.class_name.c_str());
        } else if (synth_cmd->parsed()) {
            dsnet::cmd_gen_synth(synth_out, synth_train, synth_test,
                                 synth_size, synth_channels, synth_noise,
                                 synth_seed);
        }
    } catch (const dsnet::Error& e) {
        std::cerr << e.what() << std::endl;
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << std::endl;
        return 2;
    } catch (...) {
        std::cerr << "internal error" << std::endl;
        return 2;
    }
    return 0;
}
