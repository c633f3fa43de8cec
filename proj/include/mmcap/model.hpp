#pragma once

#include "mmcap/adam.hpp"
#include "mmcap/aggregation.hpp"
#include "mmcap/dataio.hpp"
#include "mmcap/lstm.hpp"
#include "mmcap/mmcnn.hpp"

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace mmcap {

struct ModelConfig {
    std::string mode = "audio_visual"; // audio_visual | visual_only | audio_only
    int64_t t_v = 40;
    int64_t t_a = 20;
    int64_t visual_input_dim = 4096;
    int64_t audio_input_dim = 128;
    int64_t visual_proj_dim = 512; // learned projection applied before the visual LSTM
    int64_t visual_hidden = 512;
    int64_t audio_hidden = 128;
    int64_t d_s = 512; // word embedding dim
    int64_t d_c = 512; // common aggregation dim
    int64_t blocks = 10;
    int64_t batch_size = 96;
    double lr = 5e-4;
    double lr_decay = 0.5;
    int64_t lr_decay_every = 10;
    int64_t max_epochs = 50;
    int64_t max_len = 30;
    uint64_t seed = 0;

    bool use_visual() const { return mode != "audio_only"; }
    bool use_audio() const { return mode != "visual_only"; }
    int64_t t_c() const { return (use_visual() ? t_v : 0) + (use_audio() ? t_a : 0); }

    void validate() const;
    static ModelConfig from_file(const std::filesystem::path& path);
    BatchConfig batch_config() const;
};

struct ForwardOutput {
    Tensor logits;     // [B,S,V]
    Tensor se_weights; // [B,S,T_c]
};

class CaptionModel {
public:
    CaptionModel(ModelConfig config, Vocabulary vocab);

    ForwardOutput forward(const std::optional<Tensor>& visual, const std::optional<Tensor>& audio,
                          const IdMatrix& tokens_in, Mode mode);
    ForwardOutput forward(const Batch& batch, Mode mode);

    // Per item, per text position: energies of the SE weight row that
    // produced that position's word distribution.
    std::vector<std::vector<WordAttribution>> attributions_from(const Tensor& se_weights) const;

    struct Decoded {
        std::vector<std::string> words;
        std::vector<WordAttribution> attributions;
        std::string sentence;
    };
    // One-by-one argmax decoding from <sos>; stops at <eos> or after
    // max_len words. <pad> and <unk> never win the argmax.
    Decoded greedy_decode(const std::optional<Tensor>& visual,
                          const std::optional<Tensor>& audio, int64_t max_len);

    void visit_params(const std::function<void(const std::string&, Tensor&)>& fn);
    void visit_batch_norms(const std::function<void(const std::string&, BatchNorm2d&)>& fn);
    void register_params(AdamOptimizer& optimizer);

    void save_checkpoint(const std::filesystem::path& path);
    static CaptionModel load_checkpoint(const std::filesystem::path& path);

    const ModelConfig& config() const { return config_; }
    const Vocabulary& vocab() const { return vocab_; }

private:
    ModelConfig config_;
    Vocabulary vocab_;

    Tensor embedding_; // [V, d_s]
    AlignParams visual_proj_;
    LstmParams visual_lstm_;
    LstmParams audio_lstm_;
    MmCnn mmcnn_v_;
    MmCnn mmcnn_a_;
    AlignParams align_v_;
    AlignParams align_a_;
    SeParams se_;
    Tensor out_weight_; // [V, d_c]
    Tensor out_bias_;   // [V]
};

// Fraction of unmasked positions whose argmax equals the target.
double teacher_forced_accuracy(const Tensor& logits, const IdMatrix& targets,
                               const IdMatrix& mask);

} // namespace mmcap
