#pragma once

#include "mmcap/mmcf.hpp"
#include "mmcap/ops.hpp"
#include "mmcap/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace mmcap {

struct ClipRecord {
    std::string id;
    std::string visual_path; // empty when the modality is absent
    std::string audio_path;
    std::vector<std::string> captions;
    std::string split; // train | val | test
};

// Manifest: JSON array of {id, visual_path, audio_path, captions, split}.
std::vector<ClipRecord> load_manifest(const std::filesystem::path& path);

std::vector<const ClipRecord*> filter_split(const std::vector<ClipRecord>& records,
                                            const std::string& split);

// Lowercase, strip characters outside [a-z0-9'], split on whitespace.
std::vector<std::string> tokenize(const std::string& caption);

class Vocabulary {
public:
    static constexpr int32_t kPad = 0;
    static constexpr int32_t kSos = 1;
    static constexpr int32_t kEos = 2;
    static constexpr int32_t kUnk = 3;
    static constexpr int32_t kReserved = 4;

    // Words with corpus frequency >= min_freq get ids from 4 up, ordered by
    // descending frequency with alphabetical tie-break.
    static Vocabulary build(const std::vector<std::string>& captions, int min_freq = 2);

    // Builds directly from an ordered content-word list (ids 4 upward).
    static Vocabulary from_words(const std::vector<std::string>& content_words, int min_freq);

    static Vocabulary load(const std::filesystem::path& path);
    void save(const std::filesystem::path& path) const;

    int32_t size() const { return static_cast<int32_t>(id_to_word_.size()); }
    int min_freq() const { return min_freq_; }
    int32_t id_of(const std::string& word) const;
    const std::string& word_of(int32_t id) const;

    std::vector<int32_t> encode_tokens(const std::vector<std::string>& tokens) const;
    std::vector<int32_t> encode(const std::string& sentence) const;
    std::string decode(const std::vector<int32_t>& ids) const; // skips control tokens

    const std::vector<std::string>& words() const { return id_to_word_; }

private:
    void index_words();
    std::vector<std::string> id_to_word_;
    std::unordered_map<std::string, int32_t> word_to_id_;
    int min_freq_ = 2;
};

// Uniform subsampling when over-long, last-row repetition when short.
FeatureMatrix prepare_visual(const FeatureMatrix& m, int64_t target_rows);
// Head truncation when over-long, zero-row padding when short.
FeatureMatrix prepare_audio(const FeatureMatrix& m, int64_t target_rows);

struct Batch {
    Tensor visual; // [B,T_v,D_v]; undefined in audio-only mode
    Tensor audio;  // [B,T_a,D_a]; undefined in visual-only mode
    IdMatrix tokens_in;
    IdMatrix tokens_out;
    IdMatrix loss_mask;
    std::vector<std::string> clip_ids;
};

struct BatchConfig {
    int64_t batch_size = 96;
    int64_t max_len = 30;
    bool use_visual = true;
    bool use_audio = true;
    int64_t t_v = 40;
    int64_t t_a = 20;
    int64_t d_v = 0; // expected feature dims; 0 accepts the file header value
    int64_t d_a = 0;
};

class FeatureCache {
public:
    const FeatureMatrix& get(const std::string& path);
    void clear() { cache_.clear(); }

private:
    std::map<std::string, FeatureMatrix> cache_;
};

// Deterministic (seed, epoch)-shuffled stream over (clip, caption) pairs.
class BatchStream {
public:
    BatchStream(const std::vector<const ClipRecord*>& records, const Vocabulary& vocab,
                const BatchConfig& config, uint64_t seed, int64_t epoch,
                FeatureCache* cache = nullptr);

    std::optional<Batch> next();
    size_t item_count() const { return items_.size(); }

private:
    struct Item {
        const ClipRecord* record;
        size_t caption_index;
    };
    const Vocabulary& vocab_;
    BatchConfig config_;
    FeatureCache* cache_;
    FeatureCache local_cache_;
    std::vector<Item> items_;
    size_t cursor_ = 0;
};

// Loads and shapes one clip's features for inference.
Tensor load_clip_visual(const ClipRecord& record, const BatchConfig& config, FeatureCache* cache);
Tensor load_clip_audio(const ClipRecord& record, const BatchConfig& config, FeatureCache* cache);

} // namespace mmcap
