#pragma once

#include <chrono>
#include <cmath>
#include <string>
#include <vector>

#include "dsnet/config.hpp"
#include "dsnet/dataset.hpp"
#include "dsnet/loss.hpp"
#include "dsnet/metrics.hpp"
#include "dsnet/model.hpp"
#include "dsnet/optimizer.hpp"

namespace dsnet {

inline double seconds_since(
    const std::chrono::steady_clock::time_point& start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                         start)
        .count();
}

// Eval-mode logits for every sample, in dataset index order. Inference is
// deterministic per sample, so this equals per-batch recomputation exactly;
// it exists as the optional cache behind `distill.teacher_logits_cache`.
inline Tensor teacher_logits_all(Model& teacher, const LabeledDataset& ds,
                                 long batch_size) {
    const long n = ds.size();
    const long k = teacher.num_classes();
    Tensor all({n, k});
    const long bs = std::min(batch_size, n);
    for (const Batch& b : make_batches(ds, bs, 0, false)) {
        Tensor logits = teacher.forward(b.images, Mode::eval);
        for (std::size_t r = 0; r < b.indices.size(); ++r) {
            for (long j = 0; j < k; ++j) {
                all.at(b.indices[r], j) = logits.at(static_cast<long>(r), j);
            }
        }
    }
    return all;
}

inline void save_logits_csv(const Tensor& logits, const std::string& path) {
    AtomicFile file(path);
    std::ostream& os = file.stream();
    os << "index";
    for (long j = 0; j < logits.shape[1]; ++j) os << ",logit_" << j;
    os << "\n";
    for (long i = 0; i < logits.shape[0]; ++i) {
        os << i;
        for (long j = 0; j < logits.shape[1]; ++j) {
            os << "," << format_double(logits.at(i, j));
        }
        os << "\n";
    }
    file.commit();
}

inline Tensor load_logits_csv(const std::string& path, long expected_n,
                              long expected_k) {
    std::istringstream is(read_file(path));
    std::string line;
    if (!std::getline(is, line)) {
        throw CorruptionError("empty logits cache " + path);
    }
    Tensor logits({expected_n, expected_k});
    long rows = 0;
    try {
        while (std::getline(is, line)) {
            if (line.empty()) continue;
            if (rows >= expected_n) {
                throw CorruptionError("logits cache " + path +
                                      " holds more rows than the dataset");
            }
            std::istringstream ls(line);
            std::string cell;
            if (!std::getline(ls, cell, ',')) {
                throw CorruptionError("bad row in logits cache " + path);
            }
            if (std::stol(cell) != rows) {
                throw CorruptionError("logits cache " + path +
                                      " rows are out of order");
            }
            for (long j = 0; j < expected_k; ++j) {
                if (!std::getline(ls, cell, ',')) {
                    throw CorruptionError("short row in logits cache " + path);
                }
                logits.at(rows, j) = std::stod(cell);
            }
            ++rows;
        }
    } catch (const std::invalid_argument&) {
        throw CorruptionError("unparseable cell in logits cache " + path);
    } catch (const std::out_of_range&) {
        throw CorruptionError("out-of-range cell in logits cache " + path);
    }
    if (rows != expected_n) {
        throw CorruptionError("logits cache " + path + " holds " +
                              std::to_string(rows) + " rows, dataset has " +
                              std::to_string(expected_n));
    }
    return logits;
}

inline Tensor slice_rows(const Tensor& all, const std::vector<long>& indices) {
    const long k = all.shape[1];
    Tensor out({static_cast<long>(indices.size()), k});
    for (std::size_t r = 0; r < indices.size(); ++r) {
        for (long j = 0; j < k; ++j) {
            out.at(static_cast<long>(r), j) = all.at(indices[r], j);
        }
    }
    return out;
}

struct TrainStats {
    double train_seconds = 0.0;
    double final_loss = 0.0;
};

// Adam training loop. With a teacher (model or precomputed logits) the
// objective is the weighted distillation loss; without one it is plain
// hard-label cross-entropy. Teacher logits are recomputed per batch in eval
// mode unless `cached_logits` is given; the two paths produce identical
// trajectories. All randomness comes from streams derived from cfg.seed, so
// a rerun with the same config reproduces parameters bitwise.
inline TrainStats train_model(Model& m, const LabeledDataset& train_ds,
                              const ExperimentConfig& cfg, long epochs,
                              long batch_size, Model* teacher = nullptr,
                              const Tensor* cached_logits = nullptr) {
    const auto start = std::chrono::steady_clock::now();
    RngState init_rng(derive_seed(cfg.seed, "init-" + m.name));
    m.init_params(init_rng);
    RngState dropout_rng(derive_seed(cfg.seed, "dropout-" + m.name));

    AdamState adam;
    adam.lr = cfg.lr;
    adam.beta1 = cfg.beta1;
    adam.beta2 = cfg.beta2;
    adam.eps = cfg.eps;

    NamedParams params = m.named_parameters();
    TrainStats stats;
    for (long epoch = 0; epoch < epochs; ++epoch) {
        for (const Batch& batch :
             make_batches(train_ds, batch_size, cfg.seed, true, epoch)) {
            Tensor logits = m.forward(batch.images, Mode::train, &dropout_rng);
            LossResult loss;
            if (teacher != nullptr || cached_logits != nullptr) {
                Tensor t_logits =
                    cached_logits != nullptr
                        ? slice_rows(*cached_logits, batch.indices)
                        : teacher->forward(batch.images, Mode::eval);
                loss = kd_loss(logits, t_logits, batch.labels_one_hot,
                               cfg.distill);
            } else {
                loss = cross_entropy(softmax_with_temperature(logits, 1.0),
                                     batch.labels_one_hot);
            }
            if (!std::isfinite(loss.loss)) {
                throw DivergenceError("non-finite training loss at epoch " +
                                      std::to_string(epoch + 1) + ", batch " +
                                      std::to_string(batch.index + 1));
            }
            stats.final_loss = loss.loss;
            auto grads = m.backward(loss.grad);
            adam_step(params, grads, adam);
        }
    }
    m.clear_caches();
    stats.train_seconds = seconds_since(start);
    return stats;
}

struct EvalResult {
    MetricsReport report;
    std::vector<int> predicted;
    std::vector<int> actual;
    std::vector<double> scores;  // positive-class (malignant) probability
    std::vector<RocPoint> roc;   // empty when AUC is undefined
};

// Batched eval-mode inference over the whole split. Predictions take the
// argmax of the T=1 softmax; an exact tie goes to the lower class index.
inline EvalResult evaluate_model(Model& m, const LabeledDataset& ds,
                                 long batch_size) {
    const long n = ds.size();
    if (n == 0) throw DomainError("cannot evaluate an empty dataset");
    const long k = m.num_classes();
    EvalResult res;
    res.predicted.resize(static_cast<std::size_t>(n));
    res.scores.resize(static_cast<std::size_t>(n));
    res.actual = ds.labels;

    const auto start = std::chrono::steady_clock::now();
    const long bs = std::min(batch_size, n);
    for (const Batch& b : make_batches(ds, bs, 0, false)) {
        Tensor logits = m.forward(b.images, Mode::eval);
        if (!logits.all_finite()) {
            throw DivergenceError("non-finite logits while evaluating " +
                                  m.name);
        }
        Tensor probs = softmax_with_temperature(logits, 1.0);
        for (std::size_t r = 0; r < b.indices.size(); ++r) {
            int best = 0;
            for (long j = 1; j < k; ++j) {
                if (probs.at(static_cast<long>(r), j) >
                    probs.at(static_cast<long>(r), best)) {
                    best = static_cast<int>(j);
                }
            }
            res.predicted[static_cast<std::size_t>(b.indices[r])] = best;
            res.scores[static_cast<std::size_t>(b.indices[r])] =
                probs.at(static_cast<long>(r), 1);
        }
    }
    const double predict_seconds = seconds_since(start);

    res.report = compute_metrics(res.predicted, res.actual, res.scores,
                                 ds.class_names, ds.split);
    res.report.predict_seconds = predict_seconds;
    if (res.report.auc_defined) {
        res.roc = roc_curve(res.scores, res.actual);
    }
    return res;
}

}  // namespace dsnet
