#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace mmcap {

// Fixed dimensions of generated toy clips. Word signatures depend only on
// the word itself, so models trained on one seed can read features produced
// with another.
struct SyntheticSpec {
    int64_t t_v = 8;
    int64_t d_v = 16;
    int64_t t_a = 8;
    int64_t d_a = 12;
    std::vector<std::string> visual_words = {"baby", "dog", "man", "woman"};
    std::vector<std::string> audio_words = {"crying", "singing"};
};

struct SyntheticResult {
    std::filesystem::path manifest_path;
    std::filesystem::path truth_path;
    int64_t clip_count = 0;
    int64_t feature_file_count = 0;
};

struct SyntheticTruth {
    std::vector<std::string> visual_words;
    std::vector<std::string> audio_words;
    // clip id -> (visual word, audio word)
    std::map<std::string, std::pair<std::string, std::string>> clips;
};

// Writes `clips` toy clips under out_dir: per clip one visual and one audio
// MMCF file plus manifest.json and truth.json. The caption of each clip is
// "a <visual word> is <audio word>"; the visual word is decodable only from
// the visual features and the audio word only from the audio features (each
// word is a distinct constant row pattern). Deterministic for a given seed.
SyntheticResult make_synthetic(const std::filesystem::path& out_dir, int64_t clips,
                               uint64_t seed, const SyntheticSpec& spec = {});

SyntheticTruth load_synthetic_truth(const std::filesystem::path& truth_path);

} // namespace mmcap
