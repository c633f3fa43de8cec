#pragma once

#include "mmcap/model.hpp"

#include <filesystem>
#include <iosfwd>
#include <vector>

namespace mmcap {

struct EpochLog {
    int64_t epoch = 0;
    double train_loss = 0.0;
    double train_accuracy = 0.0;
    double val_loss = 0.0;
    double lr = 0.0;
};

struct TrainResult {
    std::filesystem::path checkpoint_path;
    std::vector<EpochLog> logs;
    double best_val_loss = 0.0;
    int64_t best_epoch = -1;
};

// lr(epoch) = lr0 * decay^floor(epoch / every), epochs counted from 0.
double scheduled_lr(const ModelConfig& config, int64_t epoch);

// Adam training with the step-decay schedule; keeps the checkpoint with the
// best validation loss under out_dir. When the manifest has no val split the
// train split doubles as validation (the overfit workflow). log_stream, when
// given, receives one JSON line per epoch.
TrainResult train_model(const std::vector<ClipRecord>& records, const ModelConfig& config,
                        const Vocabulary& vocab, const std::filesystem::path& out_dir,
                        std::ostream* log_stream = nullptr);

} // namespace mmcap
