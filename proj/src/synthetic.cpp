#include "mmcap/synthetic.hpp"

#include "mmcap/common.hpp"
#include "mmcap/mmcf.hpp"

#include <json.hpp>

#include <fstream>
#include <random>

namespace mmcap {

using nlohmann::json;

namespace {

uint64_t fnv1a(const std::string& s) {
    uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

// Constant +-1 signature rows; the same word always maps to the same pattern.
FeatureMatrix word_pattern(const std::string& word, int64_t rows, int64_t cols) {
    std::mt19937 rng(static_cast<uint32_t>(fnv1a(word) & 0xffffffffu));
    std::vector<float> row(static_cast<size_t>(cols));
    for (float& v : row) {
        v = (rng() & 1u) ? 1.0f : -1.0f;
    }
    FeatureMatrix m;
    m.rows = rows;
    m.cols = cols;
    m.values.reserve(static_cast<size_t>(rows * cols));
    for (int64_t r = 0; r < rows; ++r) {
        m.values.insert(m.values.end(), row.begin(), row.end());
    }
    return m;
}

std::string clip_name(int64_t i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "syn%03d", static_cast<int>(i));
    return buf;
}

} // namespace

SyntheticResult make_synthetic(const std::filesystem::path& out_dir, int64_t clips,
                               uint64_t seed, const SyntheticSpec& spec) {
    require(clips >= 1, "bad_config", "make_synthetic: need at least one clip");
    std::error_code ec;
    std::filesystem::create_directories(out_dir / "features", ec);
    require(!ec, "io_error", "cannot create " + (out_dir / "features").string());

    const int64_t nv = static_cast<int64_t>(spec.visual_words.size());
    const int64_t na = static_cast<int64_t>(spec.audio_words.size());
    const int64_t shift_v = static_cast<int64_t>(seed % static_cast<uint64_t>(nv));
    const int64_t shift_a = static_cast<int64_t>((seed / static_cast<uint64_t>(nv)) %
                                                 static_cast<uint64_t>(na));

    json manifest = json::array();
    json truth;
    truth["visual_words"] = spec.visual_words;
    truth["audio_words"] = spec.audio_words;
    truth["clips"] = json::array();

    int64_t files = 0;
    for (int64_t i = 0; i < clips; ++i) {
        // Cyclic full-product assignment: every (visual, audio) pair appears
        // once per nv*na clips, so neither word carries information about
        // the other and both feature streams are required.
        const std::string vis = spec.visual_words[static_cast<size_t>((i + shift_v) % nv)];
        const std::string aud =
            spec.audio_words[static_cast<size_t>((i / nv + shift_a) % na)];
        const std::string id = clip_name(i);
        const std::string visual_rel = "features/" + id + "_visual.mmcf";
        const std::string audio_rel = "features/" + id + "_audio.mmcf";

        save_feature_matrix(out_dir / visual_rel, word_pattern(vis, spec.t_v, spec.d_v));
        save_feature_matrix(out_dir / audio_rel, word_pattern(aud, spec.t_a, spec.d_a));
        files += 2;

        json entry;
        entry["id"] = id;
        entry["visual_path"] = visual_rel;
        entry["audio_path"] = audio_rel;
        entry["captions"] = json::array({"a " + vis + " is " + aud});
        entry["split"] = "train";
        manifest.push_back(entry);

        json t;
        t["id"] = id;
        t["visual_word"] = vis;
        t["audio_word"] = aud;
        truth["clips"].push_back(t);
    }

    SyntheticResult result;
    result.manifest_path = out_dir / "manifest.json";
    result.truth_path = out_dir / "truth.json";
    result.clip_count = clips;
    result.feature_file_count = files;

    std::ofstream mout(result.manifest_path);
    require(mout.is_open(), "io_error", "cannot create " + result.manifest_path.string());
    mout << manifest.dump(2) << "\n";
    std::ofstream tout(result.truth_path);
    require(tout.is_open(), "io_error", "cannot create " + result.truth_path.string());
    tout << truth.dump(2) << "\n";
    return result;
}

SyntheticTruth load_synthetic_truth(const std::filesystem::path& truth_path) {
    std::ifstream in(truth_path);
    require(in.is_open(), "io_error", "cannot open " + truth_path.string());
    json doc;
    in >> doc;
    SyntheticTruth truth;
    for (const json& w : doc.at("visual_words")) {
        truth.visual_words.push_back(w.get<std::string>());
    }
    for (const json& w : doc.at("audio_words")) {
        truth.audio_words.push_back(w.get<std::string>());
    }
    for (const json& c : doc.at("clips")) {
        truth.clips[c.at("id").get<std::string>()] = {c.at("visual_word").get<std::string>(),
                                                      c.at("audio_word").get<std::string>()};
    }
    return truth;
}

} // namespace mmcap
