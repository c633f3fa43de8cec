#include "mmcap/train.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <limits>
#include <ostream>

namespace mmcap {

using nlohmann::json;

double scheduled_lr(const ModelConfig& config, int64_t epoch) {
    return config.lr * std::pow(config.lr_decay,
                                static_cast<double>(epoch / config.lr_decay_every));
}

namespace {

int64_t mask_count(const IdMatrix& mask) {
    int64_t n = 0;
    for (int32_t v : mask.values) {
        n += v != 0 ? 1 : 0;
    }
    return n;
}

struct EvalStats {
    double loss = 0.0;
    double accuracy = 0.0;
};

EvalStats evaluate_split(CaptionModel& model, const std::vector<const ClipRecord*>& records,
                         const ModelConfig& config, FeatureCache& cache) {
    BatchStream stream(records, model.vocab(), config.batch_config(), config.seed, 0, &cache);
    double loss_sum = 0.0;
    double acc_sum = 0.0;
    int64_t positions = 0;
    while (auto batch = stream.next()) {
        ForwardOutput out = model.forward(*batch, Mode::Eval);
        Tensor loss = ops::masked_cross_entropy(out.logits, batch->tokens_out, batch->loss_mask);
        const int64_t count = mask_count(batch->loss_mask);
        loss_sum += static_cast<double>(loss.scalar()) * static_cast<double>(count);
        acc_sum += teacher_forced_accuracy(out.logits, batch->tokens_out, batch->loss_mask) *
                   static_cast<double>(count);
        positions += count;
    }
    require(positions > 0, "empty_split", "evaluation split has no supervised positions");
    return {loss_sum / static_cast<double>(positions),
            acc_sum / static_cast<double>(positions)};
}

} // namespace

TrainResult train_model(const std::vector<ClipRecord>& records, const ModelConfig& config,
                        const Vocabulary& vocab, const std::filesystem::path& out_dir,
                        std::ostream* log_stream) {
    config.validate();
    std::vector<const ClipRecord*> train_split = filter_split(records, "train");
    std::vector<const ClipRecord*> val_split = filter_split(records, "val");
    require(!train_split.empty(), "empty_split", "train split is empty");
    if (val_split.empty()) {
        val_split = train_split;
    }

    std::filesystem::create_directories(out_dir);
    CaptionModel model(config, vocab);
    AdamConfig adam_cfg;
    adam_cfg.lr = static_cast<float>(config.lr);
    AdamOptimizer optimizer(adam_cfg);
    model.register_params(optimizer);

    FeatureCache cache;
    TrainResult result;
    result.checkpoint_path = out_dir / "checkpoint.mmcp";
    double best_val = std::numeric_limits<double>::infinity();

    for (int64_t epoch = 0; epoch < config.max_epochs; ++epoch) {
        const double lr = scheduled_lr(config, epoch);
        optimizer.set_lr(static_cast<float>(lr));

        BatchStream stream(train_split, vocab, config.batch_config(), config.seed, epoch,
                           &cache);
        double loss_sum = 0.0;
        double acc_sum = 0.0;
        int64_t positions = 0;
        while (auto batch = stream.next()) {
            Tape tape;
            Tensor loss;
            double acc = 0.0;
            {
                TapeScope scope(tape);
                ForwardOutput out = model.forward(*batch, Mode::Train);
                loss = ops::masked_cross_entropy(out.logits, batch->tokens_out,
                                                 batch->loss_mask);
                acc = teacher_forced_accuracy(out.logits, batch->tokens_out, batch->loss_mask);
            }
            tape.backward(loss);
            optimizer.step();

            const int64_t count = mask_count(batch->loss_mask);
            loss_sum += static_cast<double>(loss.scalar()) * static_cast<double>(count);
            acc_sum += acc * static_cast<double>(count);
            positions += count;
        }
        require(positions > 0, "empty_split", "train split has no supervised positions");

        EvalStats val = evaluate_split(model, val_split, config, cache);

        EpochLog log;
        log.epoch = epoch;
        log.train_loss = loss_sum / static_cast<double>(positions);
        log.train_accuracy = acc_sum / static_cast<double>(positions);
        log.val_loss = val.loss;
        log.lr = lr;
        result.logs.push_back(log);

        if (log_stream) {
            json line;
            line["epoch"] = log.epoch;
            line["train_loss"] = log.train_loss;
            line["train_accuracy"] = log.train_accuracy;
            line["val_loss"] = log.val_loss;
            line["lr"] = log.lr;
            (*log_stream) << line.dump() << "\n";
        }

        if (val.loss < best_val) {
            best_val = val.loss;
            result.best_val_loss = val.loss;
            result.best_epoch = epoch;
            model.save_checkpoint(result.checkpoint_path);
        }
    }
    return result;
}

} // namespace mmcap
