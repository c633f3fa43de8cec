#include "mmcap/dataio.hpp"

#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <fstream>
#include <random>

namespace mmcap {

using nlohmann::json;

std::vector<ClipRecord> load_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    require(in.is_open(), "bad_manifest", "cannot open manifest " + path.string());
    json doc;
    try {
        in >> doc;
    } catch (const json::exception& e) {
        raise("bad_manifest", "manifest parse error: " + std::string(e.what()));
    }
    require(doc.is_array(), "bad_manifest", "manifest must be a JSON array");

    // Relative feature paths are taken relative to the manifest's directory.
    const std::filesystem::path base = path.parent_path();
    auto resolve = [&base](const std::string& p) {
        if (p.empty() || std::filesystem::path(p).is_absolute()) {
            return p;
        }
        return (base / p).string();
    };

    std::vector<ClipRecord> records;
    std::unordered_map<std::string, int> seen;
    for (const json& item : doc) {
        ClipRecord r;
        require(item.is_object() && item.contains("id"), "bad_manifest",
                "manifest entries need an 'id'");
        r.id = item.at("id").get<std::string>();
        require(seen.emplace(r.id, 1).second, "bad_manifest", "duplicate clip id " + r.id);
        if (item.contains("visual_path") && !item.at("visual_path").is_null()) {
            r.visual_path = resolve(item.at("visual_path").get<std::string>());
        }
        if (item.contains("audio_path") && !item.at("audio_path").is_null()) {
            r.audio_path = resolve(item.at("audio_path").get<std::string>());
        }
        require(!r.visual_path.empty() || !r.audio_path.empty(), "bad_manifest",
                "clip " + r.id + " has neither visual_path nor audio_path");
        if (item.contains("captions")) {
            for (const json& c : item.at("captions")) {
                r.captions.push_back(c.get<std::string>());
            }
        }
        r.split = item.value("split", std::string("train"));
        require(r.split == "train" || r.split == "val" || r.split == "test", "bad_manifest",
                "clip " + r.id + " has unknown split '" + r.split + "'");
        require(r.split == "test" || !r.captions.empty(), "bad_manifest",
                "clip " + r.id + " needs captions in split '" + r.split + "'");
        records.push_back(std::move(r));
    }
    return records;
}

std::vector<const ClipRecord*> filter_split(const std::vector<ClipRecord>& records,
                                            const std::string& split) {
    std::vector<const ClipRecord*> out;
    for (const ClipRecord& r : records) {
        if (r.split == split) {
            out.push_back(&r);
        }
    }
    return out;
}

std::vector<std::string> tokenize(const std::string& caption) {
    std::vector<std::string> tokens;
    std::string current;
    for (char raw : caption) {
        const unsigned char u = static_cast<unsigned char>(raw);
        if (std::isspace(u)) {
            if (!current.empty()) {
                tokens.push_back(std::move(current));
                current.clear();
            }
            continue;
        }
        const char c = static_cast<char>(std::tolower(u));
        if ((c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '\'') {
            current.push_back(c);
        }
        // anything else is stripped without breaking the token
    }
    if (!current.empty()) {
        tokens.push_back(std::move(current));
    }
    return tokens;
}

Vocabulary Vocabulary::build(const std::vector<std::string>& captions, int min_freq) {
    std::map<std::string, int64_t> freq;
    for (const std::string& caption : captions) {
        for (const std::string& tok : tokenize(caption)) {
            ++freq[tok];
        }
    }
    std::vector<std::pair<std::string, int64_t>> kept;
    for (const auto& [word, count] : freq) {
        if (count >= min_freq) {
            kept.emplace_back(word, count);
        }
    }
    std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) {
            return a.second > b.second;
        }
        return a.first < b.first;
    });

    Vocabulary v;
    v.min_freq_ = min_freq;
    v.id_to_word_ = {"<pad>", "<sos>", "<eos>", "<unk>"};
    for (const auto& [word, count] : kept) {
        v.id_to_word_.push_back(word);
    }
    v.index_words();
    return v;
}

Vocabulary Vocabulary::from_words(const std::vector<std::string>& content_words, int min_freq) {
    Vocabulary v;
    v.min_freq_ = min_freq;
    v.id_to_word_ = {"<pad>", "<sos>", "<eos>", "<unk>"};
    v.id_to_word_.insert(v.id_to_word_.end(), content_words.begin(), content_words.end());
    v.index_words();
    return v;
}

void Vocabulary::index_words() {
    word_to_id_.clear();
    for (size_t i = kReserved; i < id_to_word_.size(); ++i) {
        word_to_id_[id_to_word_[i]] = static_cast<int32_t>(i);
    }
}

int32_t Vocabulary::id_of(const std::string& word) const {
    auto it = word_to_id_.find(word);
    return it == word_to_id_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::word_of(int32_t id) const {
    require(id >= 0 && id < size(), "bad_token_id",
            "vocabulary: id " + std::to_string(id) + " out of range");
    return id_to_word_[static_cast<size_t>(id)];
}

std::vector<int32_t> Vocabulary::encode_tokens(const std::vector<std::string>& tokens) const {
    std::vector<int32_t> ids;
    ids.reserve(tokens.size());
    for (const std::string& t : tokens) {
        ids.push_back(id_of(t));
    }
    return ids;
}

std::vector<int32_t> Vocabulary::encode(const std::string& sentence) const {
    return encode_tokens(tokenize(sentence));
}

std::string Vocabulary::decode(const std::vector<int32_t>& ids) const {
    std::string out;
    for (int32_t id : ids) {
        if (id < kReserved) {
            continue;
        }
        if (!out.empty()) {
            out.push_back(' ');
        }
        out += word_of(id);
    }
    return out;
}

void Vocabulary::save(const std::filesystem::path& path) const {
    json doc;
    doc["min_freq"] = min_freq_;
    doc["words"] = json::array();
    for (size_t i = kReserved; i < id_to_word_.size(); ++i) {
        doc["words"].push_back(id_to_word_[i]);
    }
    std::ofstream out(path);
    require(out.is_open(), "io_error", "cannot create vocabulary file " + path.string());
    out << doc.dump(2) << "\n";
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    require(in.is_open(), "bad_vocab", "cannot open vocabulary " + path.string());
    json doc;
    try {
        in >> doc;
    } catch (const json::exception& e) {
        raise("bad_vocab", "vocabulary parse error: " + std::string(e.what()));
    }
    Vocabulary v;
    v.min_freq_ = doc.value("min_freq", 2);
    v.id_to_word_ = {"<pad>", "<sos>", "<eos>", "<unk>"};
    for (const json& w : doc.at("words")) {
        v.id_to_word_.push_back(w.get<std::string>());
    }
    v.index_words();
    return v;
}

FeatureMatrix prepare_visual(const FeatureMatrix& m, int64_t target_rows) {
    require(target_rows >= 1, "bad_target", "prepare_visual: target must be >= 1");
    require(m.rows >= 1, "bad_shape", "prepare_visual: empty matrix");
    FeatureMatrix out;
    out.rows = target_rows;
    out.cols = m.cols;
    out.values.resize(static_cast<size_t>(target_rows * m.cols));
    for (int64_t i = 0; i < target_rows; ++i) {
        int64_t src;
        if (m.rows >= target_rows) {
            src = i * m.rows / target_rows; // uniform subsample
        } else {
            src = std::min(i, m.rows - 1); // repeat last row to fill
        }
        std::copy_n(m.values.begin() + src * m.cols, m.cols,
                    out.values.begin() + i * m.cols);
    }
    return out;
}

FeatureMatrix prepare_audio(const FeatureMatrix& m, int64_t target_rows) {
    require(target_rows >= 1, "bad_target", "prepare_audio: target must be >= 1");
    require(m.rows >= 1, "bad_shape", "prepare_audio: empty matrix");
    FeatureMatrix out;
    out.rows = target_rows;
    out.cols = m.cols;
    out.values.assign(static_cast<size_t>(target_rows * m.cols), 0.0f);
    const int64_t keep = std::min(m.rows, target_rows);
    std::copy_n(m.values.begin(), keep * m.cols, out.values.begin());
    return out;
}

const FeatureMatrix& FeatureCache::get(const std::string& path) {
    auto it = cache_.find(path);
    if (it == cache_.end()) {
        it = cache_.emplace(path, load_feature_matrix(path)).first;
    }
    return it->second;
}

namespace {

FeatureMatrix shaped_features(const std::string& path, bool visual, int64_t target_rows,
                              int64_t expected_dim, FeatureCache& cache,
                              const std::string& clip_id) {
    require(!path.empty(), "missing_feature",
            "clip " + clip_id + " lacks a required feature path");
    FeatureMatrix m;
    try {
        m = visual ? prepare_visual(cache.get(path), target_rows)
                   : prepare_audio(cache.get(path), target_rows);
    } catch (const Error& e) {
        if (e.code() == "missing_feature") {
            raise("missing_feature", "clip " + clip_id + ": " + e.what());
        }
        throw;
    }
    require(expected_dim == 0 || m.cols == expected_dim, "dim_mismatch",
            "clip " + clip_id + ": feature dim " + std::to_string(m.cols) +
                " does not match configured " + std::to_string(expected_dim));
    return m;
}

} // namespace

Tensor load_clip_visual(const ClipRecord& record, const BatchConfig& config,
                        FeatureCache* cache) {
    FeatureCache local;
    FeatureMatrix m = shaped_features(record.visual_path, true, config.t_v, config.d_v,
                                      cache ? *cache : local, record.id);
    return Tensor::from_data({1, m.rows, m.cols}, std::move(m.values));
}

Tensor load_clip_audio(const ClipRecord& record, const BatchConfig& config,
                       FeatureCache* cache) {
    FeatureCache local;
    FeatureMatrix m = shaped_features(record.audio_path, false, config.t_a, config.d_a,
                                      cache ? *cache : local, record.id);
    return Tensor::from_data({1, m.rows, m.cols}, std::move(m.values));
}

BatchStream::BatchStream(const std::vector<const ClipRecord*>& records,
                         const Vocabulary& vocab, const BatchConfig& config, uint64_t seed,
                         int64_t epoch, FeatureCache* cache)
    : vocab_(vocab), config_(config), cache_(cache) {
    for (const ClipRecord* r : records) {
        for (size_t ci = 0; ci < r->captions.size(); ++ci) {
            items_.push_back(Item{r, ci});
        }
    }
    // Fisher-Yates with an explicit draw so the order is identical across
    // standard libraries for a given (seed, epoch).
    std::mt19937_64 rng(seed * 0x9e3779b97f4a7c15ull + static_cast<uint64_t>(epoch) + 1);
    for (size_t i = items_.size(); i > 1; --i) {
        const size_t j = static_cast<size_t>(rng() % i);
        std::swap(items_[i - 1], items_[j]);
    }
}

std::optional<Batch> BatchStream::next() {
    if (cursor_ >= items_.size()) {
        return std::nullopt;
    }
    const size_t begin = cursor_;
    const size_t end = std::min(items_.size(), begin + static_cast<size_t>(config_.batch_size));
    cursor_ = end;
    const int64_t b = static_cast<int64_t>(end - begin);

    FeatureCache& cache = cache_ ? *cache_ : local_cache_;

    std::vector<std::vector<int32_t>> token_rows;
    token_rows.reserve(static_cast<size_t>(b));
    int64_t longest = 0;
    for (size_t i = begin; i < end; ++i) {
        const Item& item = items_[i];
        std::vector<int32_t> ids = vocab_.encode(item.record->captions[item.caption_index]);
        if (static_cast<int64_t>(ids.size()) > config_.max_len - 1) {
            ids.resize(static_cast<size_t>(config_.max_len - 1));
        }
        longest = std::max(longest, static_cast<int64_t>(ids.size()));
        token_rows.push_back(std::move(ids));
    }
    const int64_t width = longest + 1; // room for <sos> / <eos>

    Batch batch;
    batch.tokens_in = IdMatrix{b, width, std::vector<int32_t>(static_cast<size_t>(b * width), Vocabulary::kPad)};
    batch.tokens_out = IdMatrix{b, width, std::vector<int32_t>(static_cast<size_t>(b * width), Vocabulary::kPad)};
    batch.loss_mask = IdMatrix{b, width, std::vector<int32_t>(static_cast<size_t>(b * width), 0)};

    for (int64_t r = 0; r < b; ++r) {
        const auto& ids = token_rows[static_cast<size_t>(r)];
        const int64_t len = static_cast<int64_t>(ids.size());
        batch.tokens_in.at(r, 0) = Vocabulary::kSos;
        for (int64_t j = 0; j < len; ++j) {
            batch.tokens_in.at(r, j + 1) = ids[static_cast<size_t>(j)];
            batch.tokens_out.at(r, j) = ids[static_cast<size_t>(j)];
            batch.loss_mask.at(r, j) = 1;
        }
        batch.tokens_out.at(r, len) = Vocabulary::kEos;
        batch.loss_mask.at(r, len) = 1;
    }

    std::vector<float> visual;
    std::vector<float> audio;
    int64_t d_v = 0;
    int64_t d_a = 0;
    for (size_t i = begin; i < end; ++i) {
        const ClipRecord& rec = *items_[i].record;
        batch.clip_ids.push_back(rec.id);
        if (config_.use_visual) {
            FeatureMatrix m = shaped_features(rec.visual_path, true, config_.t_v, config_.d_v,
                                              cache, rec.id);
            d_v = m.cols;
            visual.insert(visual.end(), m.values.begin(), m.values.end());
        }
        if (config_.use_audio) {
            FeatureMatrix m = shaped_features(rec.audio_path, false, config_.t_a, config_.d_a,
                                              cache, rec.id);
            d_a = m.cols;
            audio.insert(audio.end(), m.values.begin(), m.values.end());
        }
    }
    if (config_.use_visual) {
        batch.visual = Tensor::from_data({b, config_.t_v, d_v}, std::move(visual));
    }
    if (config_.use_audio) {
        batch.audio = Tensor::from_data({b, config_.t_a, d_a}, std::move(audio));
    }
    return batch;
}

} // namespace mmcap
