#include "mmcap/model.hpp"

#include "mmcap/init.hpp"

#include <json.hpp>

#include <cstring>
#include <fstream>
#include <map>

namespace mmcap {

using nlohmann::json;

void ModelConfig::validate() const {
    require(mode == "audio_visual" || mode == "visual_only" || mode == "audio_only",
            "bad_config", "unknown mode '" + mode + "'");
    auto positive = [](int64_t v, const char* name) {
        require(v >= 1, "bad_config", std::string(name) + " must be >= 1");
    };
    positive(t_a, "t_a");
    positive(t_v, "t_v");
    positive(visual_input_dim, "visual_input_dim");
    positive(audio_input_dim, "audio_input_dim");
    positive(visual_proj_dim, "visual_proj_dim");
    positive(visual_hidden, "visual_hidden");
    positive(audio_hidden, "audio_hidden");
    positive(d_s, "d_s");
    positive(d_c, "d_c");
    positive(batch_size, "batch_size");
    positive(max_epochs, "max_epochs");
    positive(max_len, "max_len");
    positive(lr_decay_every, "lr_decay_every");
    require(blocks >= 0, "bad_config", "blocks must be >= 0");
    require(lr > 0.0, "bad_config", "lr must be positive");
    require(lr_decay > 0.0 && lr_decay <= 1.0, "bad_config", "lr_decay must be in (0,1]");
    require(t_c() >= 2, "bad_config", "combined position count t_c must be >= 2");
}

namespace {

void config_from_json(const json& doc, ModelConfig& c) {
    c.mode = doc.value("mode", c.mode);
    c.t_v = doc.value("t_v", c.t_v);
    c.t_a = doc.value("t_a", c.t_a);
    c.visual_input_dim = doc.value("visual_input_dim", c.visual_input_dim);
    c.audio_input_dim = doc.value("audio_input_dim", c.audio_input_dim);
    c.visual_proj_dim = doc.value("visual_proj_dim", c.visual_proj_dim);
    c.visual_hidden = doc.value("visual_hidden", c.visual_hidden);
    c.audio_hidden = doc.value("audio_hidden", c.audio_hidden);
    c.d_s = doc.value("d_s", c.d_s);
    c.d_c = doc.value("d_c", c.d_c);
    c.blocks = doc.value("blocks", c.blocks);
    c.batch_size = doc.value("batch_size", c.batch_size);
    c.lr = doc.value("lr", c.lr);
    c.lr_decay = doc.value("lr_decay", c.lr_decay);
    c.lr_decay_every = doc.value("lr_decay_every", c.lr_decay_every);
    c.max_epochs = doc.value("max_epochs", c.max_epochs);
    c.max_len = doc.value("max_len", c.max_len);
    c.seed = doc.value("seed", c.seed);
}

json config_to_json(const ModelConfig& c) {
    json doc;
    doc["mode"] = c.mode;
    doc["t_v"] = c.t_v;
    doc["t_a"] = c.t_a;
    doc["visual_input_dim"] = c.visual_input_dim;
    doc["audio_input_dim"] = c.audio_input_dim;
    doc["visual_proj_dim"] = c.visual_proj_dim;
    doc["visual_hidden"] = c.visual_hidden;
    doc["audio_hidden"] = c.audio_hidden;
    doc["d_s"] = c.d_s;
    doc["d_c"] = c.d_c;
    doc["blocks"] = c.blocks;
    doc["batch_size"] = c.batch_size;
    doc["lr"] = c.lr;
    doc["lr_decay"] = c.lr_decay;
    doc["lr_decay_every"] = c.lr_decay_every;
    doc["max_epochs"] = c.max_epochs;
    doc["max_len"] = c.max_len;
    doc["seed"] = c.seed;
    return doc;
}

} // namespace

ModelConfig ModelConfig::from_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    require(in.is_open(), "bad_config", "cannot open config " + path.string());
    json doc;
    try {
        in >> doc;
    } catch (const json::exception& e) {
        raise("bad_config", "config parse error: " + std::string(e.what()));
    }
    ModelConfig c;
    config_from_json(doc, c);
    c.validate();
    return c;
}

BatchConfig ModelConfig::batch_config() const {
    BatchConfig b;
    b.batch_size = batch_size;
    b.max_len = max_len;
    b.use_visual = use_visual();
    b.use_audio = use_audio();
    b.t_v = t_v;
    b.t_a = t_a;
    b.d_v = visual_input_dim;
    b.d_a = audio_input_dim;
    return b;
}

CaptionModel::CaptionModel(ModelConfig config, Vocabulary vocab)
    : config_(std::move(config)), vocab_(std::move(vocab)) {
    config_.validate();
    require(vocab_.size() > Vocabulary::kReserved, "bad_vocab",
            "vocabulary has no content words");

    std::mt19937 rng(static_cast<uint32_t>(config_.seed * 0x9e3779b9u + 17u));
    const int64_t v = vocab_.size();

    embedding_ = Tensor::zeros({v, config_.d_s}, true);
    fill_uniform(embedding_, rng, -0.08f, 0.08f);

    if (config_.use_visual()) {
        visual_proj_ = AlignParams(config_.visual_input_dim, config_.visual_proj_dim, rng);
        visual_lstm_ = LstmParams(config_.visual_proj_dim, config_.visual_hidden, rng);
        mmcnn_v_ = MmCnn(config_.visual_hidden + config_.d_s, config_.blocks, rng);
        align_v_ = AlignParams(config_.visual_hidden + config_.d_s, config_.d_c, rng);
    }
    if (config_.use_audio()) {
        audio_lstm_ = LstmParams(config_.audio_input_dim, config_.audio_hidden, rng);
        mmcnn_a_ = MmCnn(config_.audio_hidden + config_.d_s, config_.blocks, rng);
        align_a_ = AlignParams(config_.audio_hidden + config_.d_s, config_.d_c, rng);
    }
    se_ = SeParams(config_.d_c, config_.t_c(), rng);
    out_weight_ = Tensor::zeros({v, config_.d_c}, true);
    out_bias_ = Tensor::zeros({v}, true);
    fill_xavier(out_weight_, rng, config_.d_c, v);
}

ForwardOutput CaptionModel::forward(const std::optional<Tensor>& visual,
                                    const std::optional<Tensor>& audio,
                                    const IdMatrix& tokens_in, Mode mode) {
    require(tokens_in.rows >= 1 && tokens_in.cols >= 1, "bad_shape",
            "forward: empty token batch");
    require(!config_.use_visual() || visual.has_value(), "missing_modality",
            "forward: config expects visual features");
    require(!config_.use_audio() || audio.has_value(), "missing_modality",
            "forward: config expects audio features");

    Tensor text = ops::embedding(embedding_, tokens_in); // [B,S,d_s]

    std::optional<Tensor> joint_v;
    std::optional<Tensor> joint_a;
    if (config_.use_visual()) {
        require(visual->rank() == 3 && visual->dim(0) == tokens_in.rows, "shape_mismatch",
                "forward: visual features must be [B,T_v,D_v]");
        require(visual->dim(2) == config_.visual_input_dim, "dim_mismatch",
                "forward: visual feature dim " + std::to_string(visual->dim(2)) +
                    " != configured " + std::to_string(config_.visual_input_dim));
        Tensor projected =
            ops::fully_connected(*visual, visual_proj_.weight, visual_proj_.bias);
        Tensor hidden = lstm_encode(projected, visual_lstm_); // [B,T_v,H_v]
        joint_v = mmcnn_v_.forward(construct_joint_tensor(text, hidden), mode);
    }
    if (config_.use_audio()) {
        require(audio->rank() == 3 && audio->dim(0) == tokens_in.rows, "shape_mismatch",
                "forward: audio features must be [B,T_a,D_a]");
        require(audio->dim(2) == config_.audio_input_dim, "dim_mismatch",
                "forward: audio feature dim " + std::to_string(audio->dim(2)) +
                    " != configured " + std::to_string(config_.audio_input_dim));
        Tensor hidden = lstm_encode(*audio, audio_lstm_); // [B,T_a,H_a]
        joint_a = mmcnn_a_.forward(construct_joint_tensor(text, hidden), mode);
    }

    Tensor fused = align_and_concat(joint_v, joint_a, align_v_, align_a_);
    Tensor weights = se_weights(fused, se_);
    Tensor x = aggregate(fused, weights);
    Tensor logits = ops::fully_connected(x, out_weight_, out_bias_);
    return ForwardOutput{logits, weights};
}

ForwardOutput CaptionModel::forward(const Batch& batch, Mode mode) {
    std::optional<Tensor> visual;
    std::optional<Tensor> audio;
    if (batch.visual.defined()) {
        visual = batch.visual;
    }
    if (batch.audio.defined()) {
        audio = batch.audio;
    }
    return forward(visual, audio, batch.tokens_in, mode);
}

std::vector<std::vector<WordAttribution>>
CaptionModel::attributions_from(const Tensor& weights) const {
    require(weights.rank() == 3, "bad_shape", "attributions_from expects [B,S,T_c]");
    const int64_t b = weights.dim(0);
    const int64_t s = weights.dim(1);
    const int64_t t = weights.dim(2);
    const int64_t visual_prefix = config_.use_visual() ? config_.t_v : 0;
    std::vector<std::vector<WordAttribution>> out(static_cast<size_t>(b));
    auto wd = weights.data();
    for (int64_t bi = 0; bi < b; ++bi) {
        out[static_cast<size_t>(bi)].reserve(static_cast<size_t>(s));
        for (int64_t si = 0; si < s; ++si) {
            std::span<const float> row(wd.data() + (bi * s + si) * t, static_cast<size_t>(t));
            auto [e_v, e_a] = activation_energies(row, visual_prefix);
            WordAttribution a;
            a.index = si;
            a.e_v = e_v;
            a.e_a = e_a;
            a.decision = attribute(e_v, e_a);
            out[static_cast<size_t>(bi)].push_back(a);
        }
    }
    return out;
}

CaptionModel::Decoded CaptionModel::greedy_decode(const std::optional<Tensor>& visual,
                                                  const std::optional<Tensor>& audio,
                                                  int64_t max_len) {
    require(max_len >= 1, "bad_config", "greedy_decode: max_len must be >= 1");
    Decoded result;
    std::vector<int32_t> tokens = {Vocabulary::kSos};
    const int64_t v = vocab_.size();

    while (static_cast<int64_t>(result.words.size()) < max_len) {
        IdMatrix ids{1, static_cast<int64_t>(tokens.size()), tokens};
        ForwardOutput out = forward(visual, audio, ids, Mode::Eval);
        const int64_t s = ids.cols;
        auto logits = out.logits.data();
        const float* row = logits.data() + (s - 1) * v;
        int32_t best = -1;
        float best_score = 0.0f;
        for (int32_t j = 0; j < v; ++j) {
            if (j == Vocabulary::kPad || j == Vocabulary::kUnk) {
                continue;
            }
            if (best < 0 || row[j] > best_score) {
                best = j;
                best_score = row[j];
            }
        }
        if (best == Vocabulary::kEos) {
            break;
        }
        auto per_item = attributions_from(out.se_weights);
        WordAttribution a = per_item[0][static_cast<size_t>(s - 1)];
        a.index = static_cast<int64_t>(result.words.size());
        result.attributions.push_back(a);
        result.words.push_back(vocab_.word_of(best));
        tokens.push_back(best);
    }

    for (size_t i = 0; i < result.words.size(); ++i) {
        if (i) {
            result.sentence.push_back(' ');
        }
        result.sentence += result.words[i];
    }
    return result;
}

void CaptionModel::visit_params(const std::function<void(const std::string&, Tensor&)>& fn) {
    fn("embedding", embedding_);
    auto visit_mmcnn = [&](const std::string& prefix, MmCnn& net) {
        for (size_t i = 0; i < net.blocks.size(); ++i) {
            const std::string base = prefix + ".block" + std::to_string(i);
            ResidualBlockParams& blk = net.blocks[i];
            fn(base + ".conv1", blk.conv1);
            fn(base + ".conv2", blk.conv2);
            fn(base + ".conv3", blk.conv3);
            fn(base + ".bn1.gamma", blk.bn1.gamma);
            fn(base + ".bn1.beta", blk.bn1.beta);
            fn(base + ".bn2.gamma", blk.bn2.gamma);
            fn(base + ".bn2.beta", blk.bn2.beta);
            fn(base + ".bn3.gamma", blk.bn3.gamma);
            fn(base + ".bn3.beta", blk.bn3.beta);
        }
    };
    if (config_.use_visual()) {
        fn("visual_proj.weight", visual_proj_.weight);
        fn("visual_proj.bias", visual_proj_.bias);
        fn("visual_lstm.w_input", visual_lstm_.w_input);
        fn("visual_lstm.w_hidden", visual_lstm_.w_hidden);
        fn("visual_lstm.bias", visual_lstm_.bias);
        visit_mmcnn("mmcnn_v", mmcnn_v_);
        fn("align_v.weight", align_v_.weight);
        fn("align_v.bias", align_v_.bias);
    }
    if (config_.use_audio()) {
        fn("audio_lstm.w_input", audio_lstm_.w_input);
        fn("audio_lstm.w_hidden", audio_lstm_.w_hidden);
        fn("audio_lstm.bias", audio_lstm_.bias);
        visit_mmcnn("mmcnn_a", mmcnn_a_);
        fn("align_a.weight", align_a_.weight);
        fn("align_a.bias", align_a_.bias);
    }
    fn("se.w1", se_.w1);
    fn("se.b1", se_.b1);
    fn("se.w2", se_.w2);
    fn("se.b2", se_.b2);
    fn("se.w3", se_.w3);
    fn("se.b3", se_.b3);
    fn("out.weight", out_weight_);
    fn("out.bias", out_bias_);
}

void CaptionModel::visit_batch_norms(
    const std::function<void(const std::string&, BatchNorm2d&)>& fn) {
    auto visit_mmcnn = [&](const std::string& prefix, MmCnn& net) {
        for (size_t i = 0; i < net.blocks.size(); ++i) {
            const std::string base = prefix + ".block" + std::to_string(i);
            fn(base + ".bn1", net.blocks[i].bn1);
            fn(base + ".bn2", net.blocks[i].bn2);
            fn(base + ".bn3", net.blocks[i].bn3);
        }
    };
    if (config_.use_visual()) {
        visit_mmcnn("mmcnn_v", mmcnn_v_);
    }
    if (config_.use_audio()) {
        visit_mmcnn("mmcnn_a", mmcnn_a_);
    }
}

void CaptionModel::register_params(AdamOptimizer& optimizer) {
    visit_params([&](const std::string& name, Tensor& t) { optimizer.register_param(name, t); });
}

namespace {

constexpr char kCheckpointMagic[4] = {'M', 'M', 'C', 'P'};
constexpr uint16_t kCheckpointVersion = 1;

} // namespace

void CaptionModel::save_checkpoint(const std::filesystem::path& path) {
    json header;
    header["format"] = "mmcap-checkpoint";
    header["version"] = kCheckpointVersion;
    header["config"] = config_to_json(config_);
    header["vocabulary"]["min_freq"] = vocab_.min_freq();
    header["vocabulary"]["words"] = json::array();
    for (size_t i = Vocabulary::kReserved; i < vocab_.words().size(); ++i) {
        header["vocabulary"]["words"].push_back(vocab_.words()[i]);
    }

    // Each tensor is stored as a standalone MMCF blob; rows = first extent.
    struct Entry {
        std::string name;
        std::vector<int64_t> shape;
        const float* data;
        int64_t numel;
    };
    std::vector<Entry> entries;
    visit_params([&](const std::string& name, Tensor& t) {
        entries.push_back({name, t.shape(), t.data().data(), t.numel()});
    });
    std::vector<std::pair<std::string, std::vector<float>>> stats;
    visit_batch_norms([&](const std::string& name, BatchNorm2d& bn) {
        stats.emplace_back(name + ".running_mean", bn.running_mean);
        stats.emplace_back(name + ".running_var", bn.running_var);
        header["bn_initialized"][name] = bn.initialized;
    });
    for (const auto& [name, values] : stats) {
        entries.push_back({name, {static_cast<int64_t>(values.size())}, values.data(),
                           static_cast<int64_t>(values.size())});
    }

    const int64_t mmcf_header_bytes = 14;
    int64_t offset = 0;
    header["tensors"] = json::array();
    for (const Entry& e : entries) {
        json t;
        t["name"] = e.name;
        t["shape"] = e.shape;
        t["offset"] = offset;
        header["tensors"].push_back(t);
        offset += mmcf_header_bytes + e.numel * 4;
    }

    std::ofstream out(path, std::ios::binary);
    require(out.is_open(), "io_error", "cannot create checkpoint " + path.string());
    const std::string header_text = header.dump();
    out.write(kCheckpointMagic, 4);
    const uint16_t ver = kCheckpointVersion;
    out.put(static_cast<char>(ver & 0xff));
    out.put(static_cast<char>((ver >> 8) & 0xff));
    const uint32_t hlen = static_cast<uint32_t>(header_text.size());
    for (int i = 0; i < 4; ++i) {
        out.put(static_cast<char>((hlen >> (8 * i)) & 0xff));
    }
    out.write(header_text.data(), static_cast<std::streamsize>(header_text.size()));
    for (const Entry& e : entries) {
        FeatureMatrix m;
        m.rows = e.shape[0];
        m.cols = e.numel / e.shape[0];
        m.values.assign(e.data, e.data + e.numel);
        write_mmcf(out, m);
    }
    require(out.good(), "io_error", "checkpoint write failed");
}

CaptionModel CaptionModel::load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    require(in.is_open(), "bad_checkpoint", "cannot open checkpoint " + path.string());
    char magic[4];
    in.read(magic, 4);
    require(in.gcount() == 4 && std::memcmp(magic, kCheckpointMagic, 4) == 0, "bad_checkpoint",
            "checkpoint has bad magic bytes");
    unsigned char vb[2];
    in.read(reinterpret_cast<char*>(vb), 2);
    const uint16_t version = static_cast<uint16_t>(vb[0] | (vb[1] << 8));
    require(version == kCheckpointVersion, "bad_checkpoint",
            "unsupported checkpoint version " + std::to_string(version));
    unsigned char lb[4];
    in.read(reinterpret_cast<char*>(lb), 4);
    uint32_t hlen = 0;
    for (int i = 0; i < 4; ++i) {
        hlen |= static_cast<uint32_t>(lb[i]) << (8 * i);
    }
    std::string header_text(hlen, '\0');
    in.read(header_text.data(), static_cast<std::streamsize>(hlen));
    require(in.good(), "bad_checkpoint", "checkpoint header truncated");

    json header;
    try {
        header = json::parse(header_text);
    } catch (const json::exception& e) {
        raise("bad_checkpoint", "checkpoint header parse error: " + std::string(e.what()));
    }

    ModelConfig config;
    config_from_json(header.at("config"), config);

    std::vector<std::string> words;
    for (const json& w : header.at("vocabulary").at("words")) {
        words.push_back(w.get<std::string>());
    }
    Vocabulary vocab =
        Vocabulary::from_words(words, header.at("vocabulary").value("min_freq", 2));

    CaptionModel model(config, std::move(vocab));

    std::map<std::string, Tensor*> params;
    model.visit_params([&](const std::string& name, Tensor& t) { params[name] = &t; });
    std::map<std::string, BatchNorm2d*> bns;
    model.visit_batch_norms([&](const std::string& name, BatchNorm2d& bn) { bns[name] = &bn; });

    const std::streampos payload_start = in.tellg();
    for (const json& t : header.at("tensors")) {
        const std::string name = t.at("name").get<std::string>();
        const int64_t offset = t.at("offset").get<int64_t>();
        in.seekg(payload_start + static_cast<std::streamoff>(offset));
        FeatureMatrix m = read_mmcf(in);

        const std::string mean_suffix = ".running_mean";
        const std::string var_suffix = ".running_var";
        auto ends_with = [](const std::string& s, const std::string& suffix) {
            return s.size() >= suffix.size() &&
                   s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
        };
        if (ends_with(name, mean_suffix)) {
            auto it = bns.find(name.substr(0, name.size() - mean_suffix.size()));
            require(it != bns.end(), "bad_checkpoint", "unknown tensor '" + name + "'");
            it->second->running_mean = m.values;
            continue;
        }
        if (ends_with(name, var_suffix)) {
            auto it = bns.find(name.substr(0, name.size() - var_suffix.size()));
            require(it != bns.end(), "bad_checkpoint", "unknown tensor '" + name + "'");
            it->second->running_var = m.values;
            continue;
        }
        auto it = params.find(name);
        require(it != params.end(), "bad_checkpoint", "unknown tensor '" + name + "'");
        require(it->second->numel() == static_cast<int64_t>(m.values.size()), "bad_checkpoint",
                "tensor '" + name + "' has unexpected size");
        std::copy(m.values.begin(), m.values.end(), it->second->data().begin());
    }
    if (header.contains("bn_initialized")) {
        for (const auto& [name, flag] : header.at("bn_initialized").items()) {
            auto it = bns.find(name);
            require(it != bns.end(), "bad_checkpoint", "unknown batch-norm '" + name + "'");
            it->second->initialized = flag.get<bool>();
        }
    }
    return model;
}

double teacher_forced_accuracy(const Tensor& logits, const IdMatrix& targets,
                               const IdMatrix& mask) {
    require(logits.rank() == 3, "bad_shape", "teacher_forced_accuracy expects [B,S,V]");
    const int64_t rows = logits.dim(0) * logits.dim(1);
    const int64_t v = logits.dim(2);
    auto ld = logits.data();
    int64_t hits = 0;
    int64_t total = 0;
    for (int64_t r = 0; r < rows; ++r) {
        if (mask.values[static_cast<size_t>(r)] == 0) {
            continue;
        }
        const float* row = ld.data() + r * v;
        int64_t best = 0;
        for (int64_t j = 1; j < v; ++j) {
            if (row[j] > row[best]) {
                best = j;
            }
        }
        hits += best == targets.values[static_cast<size_t>(r)] ? 1 : 0;
        ++total;
    }
    require(total > 0, "empty_mask", "teacher_forced_accuracy: mask selects nothing");
    return static_cast<double>(hits) / static_cast<double>(total);
}

} // namespace mmcap
