// mmcap: audio-visual caption model CLI.
//
// Subcommands: build-vocab, train, caption, explain, eval, make-synthetic.
// Errors are reported as one JSON object on stderr with a machine-readable
// "code" field; exit status is nonzero on any failure.

#include "mmcap/dataio.hpp"
#include "mmcap/kernels.hpp"
#include "mmcap/metrics.hpp"
#include "mmcap/model.hpp"
#include "mmcap/synthetic.hpp"
#include "mmcap/train.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>

namespace {

using mmcap::Error;
using nlohmann::json;

void apply_thread_cap() {
    if (const char* env = std::getenv("MMCAP_THREADS")) {
        const int n = std::atoi(env);
        if (n >= 1) {
            mmcap::kernels::set_max_threads(n);
        }
    }
}

std::ofstream open_output(const std::string& path) {
    std::ofstream out(path);
    if (!out.is_open()) {
        throw Error("io_error", "cannot create output file " + path);
    }
    return out;
}

int cmd_build_vocab(const std::string& manifest_path, const std::string& out_path,
                    int min_freq) {
    auto records = mmcap::load_manifest(manifest_path);
    std::vector<std::string> captions;
    for (const mmcap::ClipRecord& r : records) {
        if (r.split == "train") {
            captions.insert(captions.end(), r.captions.begin(), r.captions.end());
        }
    }
    if (captions.empty()) {
        throw Error("empty_split", "no train captions in manifest");
    }
    auto vocab = mmcap::Vocabulary::build(captions, min_freq);
    vocab.save(out_path);
    std::cout << "vocabulary: " << vocab.size() << " entries (" << vocab.size() - 4
              << " words + 4 reserved) -> " << out_path << "\n";
    return 0;
}

struct ConfigOverrides {
    std::optional<std::string> mode;
    std::optional<int64_t> blocks;
    std::optional<int64_t> batch_size;
    std::optional<double> lr;
    std::optional<int64_t> max_epochs;
    std::optional<int64_t> max_len;
    std::optional<uint64_t> seed;

    void apply(mmcap::ModelConfig& c) const {
        if (mode) c.mode = *mode;
        if (blocks) c.blocks = *blocks;
        if (batch_size) c.batch_size = *batch_size;
        if (lr) c.lr = *lr;
        if (max_epochs) c.max_epochs = *max_epochs;
        if (max_len) c.max_len = *max_len;
        if (seed) c.seed = *seed;
    }
};

int cmd_train(const std::string& config_path, const std::string& manifest_path,
              const std::string& vocab_path, const std::string& out_dir,
              const ConfigOverrides& overrides) {
    mmcap::ModelConfig config = mmcap::ModelConfig::from_file(config_path);
    overrides.apply(config);
    config.validate();

    auto records = mmcap::load_manifest(manifest_path);
    auto vocab = mmcap::Vocabulary::load(vocab_path);

    std::filesystem::create_directories(out_dir);
    std::ofstream log(std::filesystem::path(out_dir) / "train_log.jsonl");
    if (!log.is_open()) {
        throw Error("io_error", "cannot create training log in " + out_dir);
    }

    mmcap::TrainResult result = mmcap::train_model(records, config, vocab, out_dir, &log);
    std::cout << "checkpoint: " << result.checkpoint_path.string() << "\n"
              << "best_epoch: " << result.best_epoch << "\n"
              << "best_val_loss: " << result.best_val_loss << "\n";
    return 0;
}

struct DecodedClip {
    std::string id;
    mmcap::CaptionModel::Decoded decoded;
};

std::vector<DecodedClip> decode_split(mmcap::CaptionModel& model,
                                      const std::vector<mmcap::ClipRecord>& records,
                                      const std::string& split) {
    const mmcap::BatchConfig bc = model.config().batch_config();
    mmcap::FeatureCache cache;
    std::vector<DecodedClip> out;
    for (const mmcap::ClipRecord* r : mmcap::filter_split(records, split)) {
        std::optional<mmcap::Tensor> visual;
        std::optional<mmcap::Tensor> audio;
        if (bc.use_visual) {
            visual = mmcap::load_clip_visual(*r, bc, &cache);
        }
        if (bc.use_audio) {
            audio = mmcap::load_clip_audio(*r, bc, &cache);
        }
        out.push_back({r->id, model.greedy_decode(visual, audio, model.config().max_len)});
    }
    return out;
}

int cmd_caption(const std::string& checkpoint_path, const std::string& manifest_path,
                const std::string& split, const std::string& out_path) {
    auto model = mmcap::CaptionModel::load_checkpoint(checkpoint_path);
    auto records = mmcap::load_manifest(manifest_path);
    auto decoded = decode_split(model, records, split);

    json doc = json::array();
    for (const DecodedClip& d : decoded) {
        doc.push_back({{"id", d.id}, {"caption", d.decoded.sentence}});
    }
    auto out = open_output(out_path);
    out << doc.dump(2) << "\n";
    std::cout << "captions: " << decoded.size() << " clips -> " << out_path << "\n";
    return 0;
}

std::set<std::string> load_lexicon(const std::string& path) {
    std::ifstream in(path);
    if (!in.is_open()) {
        throw Error("io_error", "cannot open lexicon " + path);
    }
    std::set<std::string> words;
    std::string line;
    while (std::getline(in, line)) {
        for (const std::string& tok : mmcap::tokenize(line)) {
            words.insert(tok);
        }
    }
    return words;
}

json attribution_json(const std::string& word, const mmcap::WordAttribution& a) {
    return {{"word", word},
            {"e_v", a.e_v},
            {"e_a", a.e_a},
            {"decision", mmcap::decision_name(a.decision)}};
}

void write_explain_html(std::ostream& out, const std::vector<DecodedClip>& decoded) {
    out << "<!doctype html><html><head><meta charset=\"utf-8\"><title>mmcap attribution"
        << "</title><style>body{font-family:sans-serif}.audio{color:#c0392b}"
        << ".visual{color:#2962b8}.tie{color:#777}.clip{margin:0.6em 0}"
        << "span{margin-right:0.35em}</style></head><body>\n"
        << "<p>audio-activated words are <span class=\"audio\">red</span>, "
        << "visual-activated words are <span class=\"visual\">blue</span>.</p>\n";
    for (const DecodedClip& d : decoded) {
        out << "<div class=\"clip\"><b>" << d.id << "</b>: ";
        for (size_t i = 0; i < d.decoded.words.size(); ++i) {
            const auto& a = d.decoded.attributions[i];
            out << "<span class=\"" << mmcap::decision_name(a.decision) << "\">"
                << d.decoded.words[i] << "</span>";
        }
        out << "</div>\n";
    }
    out << "</body></html>\n";
}

int cmd_explain(const std::string& checkpoint_path, const std::string& manifest_path,
                const std::string& split, const std::string& out_path,
                const std::string& lexicon_path, const std::string& html_path) {
    auto model = mmcap::CaptionModel::load_checkpoint(checkpoint_path);
    auto records = mmcap::load_manifest(manifest_path);
    auto decoded = decode_split(model, records, split);

    std::optional<std::set<std::string>> lexicon;
    if (!lexicon_path.empty()) {
        lexicon = load_lexicon(lexicon_path);
    }

    auto out = open_output(out_path);
    for (const DecodedClip& d : decoded) {
        json line;
        line["id"] = d.id;
        line["caption"] = d.decoded.sentence;
        line["words"] = json::array();
        for (size_t i = 0; i < d.decoded.words.size(); ++i) {
            line["words"].push_back(attribution_json(d.decoded.words[i],
                                                     d.decoded.attributions[i]));
        }
        if (lexicon) {
            line["filtered"] = json::array();
            for (size_t i = 0; i < d.decoded.words.size(); ++i) {
                if (lexicon->count(d.decoded.words[i])) {
                    line["filtered"].push_back(
                        attribution_json(d.decoded.words[i], d.decoded.attributions[i]));
                }
            }
        }
        out << line.dump() << "\n";
    }
    if (!html_path.empty()) {
        auto html = open_output(html_path);
        write_explain_html(html, decoded);
    }
    std::cout << "explained: " << decoded.size() << " clips -> " << out_path << "\n";
    return 0;
}

int cmd_eval(const std::string& candidates_path, const std::string& manifest_path,
             const std::string& split, const std::string& out_path) {
    auto records = mmcap::load_manifest(manifest_path);
    std::ifstream cin_file(candidates_path);
    if (!cin_file.is_open()) {
        throw Error("io_error", "cannot open candidates " + candidates_path);
    }
    json cand_doc;
    try {
        cin_file >> cand_doc;
    } catch (const json::exception& e) {
        throw Error("bad_candidates", "candidate parse error: " + std::string(e.what()));
    }
    if (!cand_doc.is_array()) {
        throw Error("bad_candidates", "candidates must be a JSON array of {id, caption}");
    }

    std::map<std::string, const mmcap::ClipRecord*> by_id;
    for (const mmcap::ClipRecord* r : mmcap::filter_split(records, split)) {
        by_id[r->id] = r;
    }

    mmcap::EvalCorpus corpus;
    std::vector<std::string> unknown;
    for (const json& c : cand_doc) {
        const std::string id = c.at("id").get<std::string>();
        auto it = by_id.find(id);
        if (it == by_id.end()) {
            unknown.push_back(id);
            continue;
        }
        mmcap::EvalEntry entry;
        entry.id = id;
        entry.candidate = mmcap::tokenize(c.at("caption").get<std::string>());
        for (const std::string& ref : it->second->captions) {
            entry.references.push_back(mmcap::tokenize(ref));
        }
        corpus.entries.push_back(std::move(entry));
    }
    if (!unknown.empty()) {
        std::string list;
        for (const std::string& id : unknown) {
            list += (list.empty() ? "" : ", ") + id;
        }
        throw Error("unknown_ids", "candidate ids missing from manifest split: " + list);
    }

    json report;
    report["bleu4"] = mmcap::bleu4(corpus).score;
    report["rouge_l"] = mmcap::rouge_l(corpus);
    report["cider"] = mmcap::cider(corpus);
    report["meteor"] = "n/a";
    report["clip_count"] = corpus.entries.size();

    auto out = open_output(out_path);
    out << report.dump(2) << "\n";
    std::cout << report.dump(2) << "\n";
    return 0;
}

int cmd_make_synthetic(const std::string& out_dir, int64_t clips, uint64_t seed) {
    auto result = mmcap::make_synthetic(out_dir, clips, seed);
    std::cout << "clips: " << result.clip_count << "\n"
              << "feature_files: " << result.feature_file_count << "\n"
              << "manifest: " << result.manifest_path.string() << "\n"
              << "truth: " << result.truth_path.string() << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    apply_thread_cap();

    CLI::App app{"multimodal audio-visual captioning"};
    app.require_subcommand(1);

    // build-vocab
    std::string manifest_path;
    std::string out_path;
    int min_freq = 2;
    auto* build_vocab = app.add_subcommand("build-vocab", "build a vocabulary from captions");
    build_vocab->add_option("--manifest", manifest_path, "manifest JSON")->required();
    build_vocab->add_option("--out", out_path, "output vocabulary JSON")->required();
    build_vocab->add_option("--min-freq", min_freq, "minimum word frequency (default 2)");

    // train
    std::string config_path;
    std::string vocab_path;
    std::string out_dir;
    ConfigOverrides overrides;
    std::string mode_override;
    int64_t blocks_override = -1;
    int64_t batch_override = -1;
    double lr_override = -1.0;
    int64_t epochs_override = -1;
    int64_t max_len_override = -1;
    int64_t seed_override = -1;
    auto* train = app.add_subcommand("train", "train a captioning model");
    train->add_option("--config", config_path, "config JSON")->required();
    train->add_option("--manifest", manifest_path, "manifest JSON")->required();
    train->add_option("--vocab", vocab_path, "vocabulary JSON")->required();
    train->add_option("--out-dir", out_dir, "output directory")->required();
    train->add_option("--mode", mode_override, "override: audio_visual|visual_only|audio_only");
    train->add_option("--blocks", blocks_override, "override: residual block count");
    train->add_option("--batch-size", batch_override, "override: batch size");
    train->add_option("--lr", lr_override, "override: initial learning rate");
    train->add_option("--max-epochs", epochs_override, "override: epoch count");
    train->add_option("--max-len", max_len_override, "override: max caption length");
    train->add_option("--seed", seed_override, "override: RNG seed");

    // caption
    std::string checkpoint_path;
    std::string split = "test";
    auto* caption = app.add_subcommand("caption", "generate captions for a split");
    caption->add_option("--checkpoint", checkpoint_path, "model checkpoint")->required();
    caption->add_option("--manifest", manifest_path, "manifest JSON")->required();
    caption->add_option("--split", split, "split to caption (default test)");
    caption->add_option("--out", out_path, "output captions JSON")->required();

    // explain
    std::string lexicon_path;
    std::string html_path;
    auto* explain = app.add_subcommand("explain", "captions with per-word modality energies");
    explain->add_option("--checkpoint", checkpoint_path, "model checkpoint")->required();
    explain->add_option("--manifest", manifest_path, "manifest JSON")->required();
    explain->add_option("--split", split, "split to explain (default test)");
    explain->add_option("--out", out_path, "output JSON lines")->required();
    explain->add_option("--lexicon", lexicon_path, "noun/verb lexicon filter (one word per line)");
    explain->add_option("--html", html_path, "also write a highlight page");

    // eval
    std::string candidates_path;
    auto* eval = app.add_subcommand("eval", "score candidate captions");
    eval->add_option("--candidates", candidates_path, "candidate captions JSON")->required();
    eval->add_option("--manifest", manifest_path, "manifest JSON")->required();
    eval->add_option("--split", split, "split with reference captions (default test)");
    eval->add_option("--out", out_path, "output metrics JSON")->required();

    // make-synthetic
    int64_t clips = 8;
    uint64_t seed = 7;
    auto* synth = app.add_subcommand("make-synthetic", "generate a toy audio/visual dataset");
    synth->add_option("--out-dir", out_dir, "output directory")->required();
    synth->add_option("--clips", clips, "clip count (default 8)");
    synth->add_option("--seed", seed, "RNG seed (default 7)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (build_vocab->parsed()) {
            return cmd_build_vocab(manifest_path, out_path, min_freq);
        }
        if (train->parsed()) {
            if (!mode_override.empty()) overrides.mode = mode_override;
            if (blocks_override >= 0) overrides.blocks = blocks_override;
            if (batch_override >= 0) overrides.batch_size = batch_override;
            if (lr_override > 0) overrides.lr = lr_override;
            if (epochs_override >= 0) overrides.max_epochs = epochs_override;
            if (max_len_override >= 0) overrides.max_len = max_len_override;
            if (seed_override >= 0) overrides.seed = static_cast<uint64_t>(seed_override);
            return cmd_train(config_path, manifest_path, vocab_path, out_dir, overrides);
        }
        if (caption->parsed()) {
            return cmd_caption(checkpoint_path, manifest_path, split, out_path);
        }
        if (explain->parsed()) {
            return cmd_explain(checkpoint_path, manifest_path, split, out_path, lexicon_path,
                               html_path);
        }
        if (eval->parsed()) {
            return cmd_eval(candidates_path, manifest_path, split, out_path);
        }
        if (synth->parsed()) {
            return cmd_make_synthetic(out_dir, clips, seed);
        }
    } catch (const Error& e) {
        json diag;
        diag["code"] = e.code();
        diag["message"] = e.what();
        std::cerr << diag.dump() << "\n";
        return 1;
    } catch (const std::exception& e) {
        json diag;
        diag["code"] = "internal";
        diag["message"] = e.what();
        std::cerr << diag.dump() << "\n";
        return 1;
    }
    return 0;
}
