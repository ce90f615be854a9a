#pragma once

#include <algorithm>
#include <fstream>
#include <numeric>

#include "clm/lm/model.hpp"

namespace clm::lm {

struct TrainError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct TrainHyperparams {
    double learning_rate = 7e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double weight_decay = 0.0;
    int warmup_iterations = 10;
    int epochs = 1;
    int batch_size = 32;
    double grad_clip = 1.0;
    std::uint64_t seed = 0;        // shuffle + dropout streams
    std::string loss_log_path;     // JSON-lines {step, loss, lr, tokens_seen}; empty = no file
};

struct StepLog {
    long step = 0;
    double loss = 0;   // mean masked NLL per token for this batch, nats
    double lr = 0;
    long tokens_seen = 0;
};

namespace detail {

inline double lr_at(const TrainHyperparams& hp, long step, long total_steps) {
    // step is 1-based
    if (step <= hp.warmup_iterations)
        return hp.learning_rate * static_cast<double>(step) / std::max(1, hp.warmup_iterations);
    long decay_total = std::max<long>(1, total_steps - hp.warmup_iterations);
    long decay_step = std::min<long>(step - hp.warmup_iterations, decay_total);
    double t = static_cast<double>(decay_step) / static_cast<double>(decay_total);
    return hp.learning_rate * 0.5 * (1.0 + std::cos(t * M_PI));
}

}  // namespace detail

// Mean masked negative log-likelihood training with AdamW, linear warmup then
// cosine decay to zero, and global-norm gradient clipping. Sentences are
// visited in a seeded shuffled order each epoch; a batch is one gradient
// accumulation over up to batch_size sentences.
template <typename Float>
std::vector<StepLog> train(Model<Float>& model, const std::vector<tok::Sentence>& sentences,
                           const TrainHyperparams& hp) {
    if (hp.learning_rate <= 0) throw TrainError("learning_rate must be > 0");
    if (hp.epochs < 0) throw TrainError("epochs must be >= 0");
    if (hp.batch_size < 1) throw TrainError("batch_size must be >= 1");
    for (const auto& s : sentences)
        if (static_cast<int>(s.token_ids.size()) > model.config.context_length)
            throw TrainError("sentence exceeds context_length: " + s.source);

    std::vector<StepLog> curve;
    if (hp.epochs == 0 || sentences.empty()) return curve;

    if (!model.train_state) {
        model.train_state.emplace();
        model.train_state->m.assign(model.w.size(), Float(0));
        model.train_state->v.assign(model.w.size(), Float(0));
    }
    auto& ts = *model.train_state;

    const long n = static_cast<long>(sentences.size());
    const long steps_per_epoch = (n + hp.batch_size - 1) / hp.batch_size;
    const long total_steps = steps_per_epoch * hp.epochs;

    std::ofstream log;
    if (!hp.loss_log_path.empty()) {
        log.open(hp.loss_log_path, std::ios::app);
        if (!log) throw TrainError("cannot open loss log " + hp.loss_log_path);
    }

    auto dropout_rng = make_rng(hp.seed, "train/dropout");
    std::vector<Float> grad(model.w.size());
    std::vector<std::size_t> order(sentences.size());
    std::iota(order.begin(), order.end(), 0);
    long tokens_seen = 0;
    long step = ts.step;

    for (int epoch = 0; epoch < hp.epochs; ++epoch) {
        auto shuffle_rng = make_rng(hp.seed, "train/shuffle/" + std::to_string(epoch));
        std::shuffle(order.begin(), order.end(), shuffle_rng);

        for (long b = 0; b < steps_per_epoch; ++b) {
            std::fill(grad.begin(), grad.end(), Float(0));
            double loss_sum = 0;
            long masked_total = 0;
            std::vector<std::string> batch_ids;
            for (long i = b * hp.batch_size; i < std::min<long>(n, (b + 1) * hp.batch_size); ++i) {
                const auto& s = sentences[order[i]];
                batch_ids.push_back(s.source.empty() ? std::to_string(order[i]) : s.source);
                int count = 0;
                Float nll = masked_nll<Float>(model, s.token_ids, s.loss_mask, &count, &grad,
                                              model.config.dropout > 0 ? &dropout_rng : nullptr);
                loss_sum += static_cast<double>(nll);
                masked_total += count;
                tokens_seen += static_cast<long>(s.token_ids.size());
            }
            if (masked_total == 0) throw TrainError("batch with no supervised positions");
            double loss = loss_sum / masked_total;

            ++step;
            double lr = detail::lr_at(hp, step, total_steps);
            if (!std::isfinite(loss)) {
                std::string ids;
                for (const auto& id : batch_ids) ids += (ids.empty() ? "" : ",") + id;
                throw TrainError("non-finite loss at step " + std::to_string(step) + " (lr " +
                                 std::to_string(lr) + ", batch " + ids + ")");
            }

            // grad currently holds d(sum of NLL); switch to the batch mean
            Float scale = Float(1) / static_cast<Float>(masked_total);
            double norm_sq = 0;
            for (auto& g : grad) {
                g *= scale;
                norm_sq += static_cast<double>(g) * static_cast<double>(g);
            }
            if (hp.grad_clip > 0) {
                double norm = std::sqrt(norm_sq);
                if (norm > hp.grad_clip) {
                    Float c = static_cast<Float>(hp.grad_clip / norm);
                    for (auto& g : grad) g *= c;
                }
            }

            double bc1 = 1.0 - std::pow(hp.beta1, static_cast<double>(step));
            double bc2 = 1.0 - std::pow(hp.beta2, static_cast<double>(step));
            for (std::size_t i = 0; i < model.w.size(); ++i) {
                ts.m[i] = static_cast<Float>(hp.beta1 * ts.m[i] + (1 - hp.beta1) * grad[i]);
                ts.v[i] =
                    static_cast<Float>(hp.beta2 * ts.v[i] + (1 - hp.beta2) * grad[i] * grad[i]);
                double mhat = ts.m[i] / bc1;
                double vhat = ts.v[i] / bc2;
                double upd = lr * (mhat / (std::sqrt(vhat) + 1e-8) +
                                   hp.weight_decay * static_cast<double>(model.w[i]));
                model.w[i] = static_cast<Float>(model.w[i] - upd);
                if (!std::isfinite(static_cast<double>(model.w[i])))
                    throw TrainError("non-finite parameter after step " + std::to_string(step));
            }
            ts.step = step;

            curve.push_back({step, loss, lr, tokens_seen});
            if (log)
                log << "{\"step\":" << step << ",\"loss\":" << loss << ",\"lr\":" << lr
                    << ",\"tokens_seen\":" << tokens_seen << "}\n";
        }
    }
    return curve;
}

enum class FinetuneTarget { quality, class_label };

// Restricted supervision: the loss mask is rewritten so only the trailing
// quality (position len-3) or class (len-2) condition target carries loss.
template <typename Float>
std::vector<StepLog> finetune_recognition(Model<Float>& model, std::vector<tok::Sentence> sentences,
                                          FinetuneTarget target, const TrainHyperparams& hp) {
    for (auto& s : sentences) {
        if (s.variant != tok::Variant::recognition)
            throw TrainError("finetune_recognition needs recognition-variant sentences");
        std::size_t len = s.token_ids.size();
        if (len < 4) throw TrainError("sentence too short");
        std::fill(s.loss_mask.begin(), s.loss_mask.end(), 0);
        s.loss_mask[target == FinetuneTarget::quality ? len - 3 : len - 2] = 1;
    }
    return train(model, sentences, hp);
}

}  // namespace clm::lm
