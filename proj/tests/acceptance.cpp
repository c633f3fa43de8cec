// Acceptance suite. Runs every criterion end to end and prints one
// PASS/FAIL line per criterion; exits nonzero if any fail. The CLI binary
// path is taken from the MMCAP_CLI environment variable (criteria that
// exercise the command surface need it).

#include "mmcap/aggregation.hpp"
#include "mmcap/dataio.hpp"
#include "mmcap/lstm.hpp"
#include "mmcap/metrics.hpp"
#include "mmcap/mmcnn.hpp"
#include "mmcap/model.hpp"
#include "mmcap/synthetic.hpp"
#include "mmcap/train.hpp"

#include "ref_double.hpp"
#include "test_util.hpp"

#include <json.hpp>

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <iostream>
#include <sstream>

using namespace mmcap;
using nlohmann::json;

namespace {

using Clock = std::chrono::steady_clock;

struct Harness {
    int failures = 0;

    void run(int number, const std::string& title, const std::function<std::string()>& body) {
        const auto start = Clock::now();
        try {
            const std::string detail = body();
            const double secs = std::chrono::duration<double>(Clock::now() - start).count();
            std::printf("criterion %d PASS  %-28s %s (%.1fs)\n", number, title.c_str(),
                        detail.c_str(), secs);
        } catch (const std::exception& e) {
            const double secs = std::chrono::duration<double>(Clock::now() - start).count();
            std::printf("criterion %d FAIL  %-28s %s (%.1fs)\n", number, title.c_str(), e.what(),
                        secs);
            ++failures;
        }
        std::fflush(stdout);
    }
};

void expect(bool cond, const std::string& message) {
    if (!cond) {
        throw std::runtime_error(message);
    }
}

std::filesystem::path work_dir() {
    auto dir = std::filesystem::temp_directory_path() / "mmcap_acceptance";
    return dir;
}

std::filesystem::path fresh_dir(const std::string& name) {
    auto dir = work_dir() / name;
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

const char* cli_path() {
    const char* p = std::getenv("MMCAP_CLI");
    expect(p != nullptr && *p, "MMCAP_CLI environment variable not set");
    return p;
}

std::string run_cli(const std::string& args) {
    const auto log = work_dir() / "cli_output.txt";
    const std::string cmd =
        std::string(cli_path()) + " " + args + " > " + log.string() + " 2>&1";
    const int rc = std::system(cmd.c_str());
    std::ifstream in(log);
    std::stringstream ss;
    ss << in.rdbuf();
    if (rc != 0) {
        throw std::runtime_error("cli failed: " + cmd + "\n" + ss.str());
    }
    return ss.str();
}

std::string file_bytes(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

ModelConfig toy_config(int64_t blocks, uint64_t seed) {
    ModelConfig c;
    c.mode = "audio_visual";
    c.t_v = 8;
    c.t_a = 8;
    c.visual_input_dim = 16;
    c.audio_input_dim = 12;
    c.visual_proj_dim = 16;
    c.visual_hidden = 32;
    c.audio_hidden = 16;
    c.d_s = 32;
    c.d_c = 32;
    c.blocks = blocks;
    c.batch_size = 8;
    c.lr = 2e-3;
    c.lr_decay = 0.5;
    c.lr_decay_every = 50;
    c.max_epochs = 200;
    c.max_len = 12;
    c.seed = seed;
    return c;
}

void write_toy_config(const std::filesystem::path& path, const ModelConfig& c) {
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
    std::ofstream out(path);
    out << doc.dump(2) << "\n";
}

// ---------------------------------------------------------------------------
// criterion 1: autoregressivity
// ---------------------------------------------------------------------------

std::string criterion_autoregressivity() {
    const auto start = Clock::now();
    std::mt19937 rng(401);
    Vocabulary vocab = Vocabulary::build(
        {"a man is singing loudly", "a dog is barking fast", "singing barking loudly fast man dog"},
        1);
    int checked = 0;
    for (int64_t k : {1, 2, 10}) {
        ModelConfig config;
        config.mode = "audio_visual";
        config.t_v = 6;
        config.t_a = 4;
        config.visual_input_dim = 5;
        config.audio_input_dim = 4;
        config.visual_proj_dim = 5;
        config.visual_hidden = 8;
        config.audio_hidden = 6;
        config.d_s = 16;
        config.d_c = 16;
        config.blocks = k;
        config.seed = 400 + static_cast<uint64_t>(k);
        CaptionModel model(config, vocab);

        Tensor visual = testutil::random_tensor({1, config.t_v, config.visual_input_dim}, rng);
        Tensor audio = testutil::random_tensor({1, config.t_a, config.audio_input_dim}, rng);

        // Populate batch-norm running statistics, then freeze in eval mode.
        for (int i = 0; i < 2; ++i) {
            IdMatrix warm{1, 6, std::vector<int32_t>(6, Vocabulary::kSos)};
            for (auto& t : warm.values) {
                t = static_cast<int32_t>(rng() % vocab.size());
            }
            warm.values[0] = Vocabulary::kSos;
            model.forward(visual, audio, warm, Mode::Train);
        }

        const int64_t s = 8;
        const int perturbations = k == 10 ? 20 : 15; // 50 total across k
        for (int round = 0; round < perturbations; ++round) {
            IdMatrix tokens{1, s, {}};
            tokens.values.push_back(Vocabulary::kSos);
            for (int64_t i = 1; i < s; ++i) {
                tokens.values.push_back(
                    static_cast<int32_t>(4 + rng() % (vocab.size() - 4)));
            }
            ForwardOutput base = model.forward(visual, audio, tokens, Mode::Eval);

            const int64_t cut = 1 + static_cast<int64_t>(rng() % (s - 1));
            IdMatrix mutated = tokens;
            for (int64_t i = cut; i < s; ++i) {
                mutated.values[static_cast<size_t>(i)] =
                    static_cast<int32_t>(4 + rng() % (vocab.size() - 4));
            }
            ForwardOutput after = model.forward(visual, audio, mutated, Mode::Eval);

            const int64_t v = vocab.size();
            for (int64_t i = 0; i < cut; ++i) {
                for (int64_t j = 0; j < v; ++j) {
                    const float d = std::abs(
                        base.logits.data()[static_cast<size_t>(i * v + j)] -
                        after.logits.data()[static_cast<size_t>(i * v + j)]);
                    expect(d < 1e-5f, "k=" + std::to_string(k) + ": logit drift " +
                                          std::to_string(d) + " at row " + std::to_string(i));
                }
            }
            ++checked;
        }
    }
    const double secs = std::chrono::duration<double>(Clock::now() - start).count();
    expect(secs < 60.0, "runtime budget exceeded");
    return std::to_string(checked) + " perturbations, k in {1,2,10}, drift < 1e-5";
}

// ---------------------------------------------------------------------------
// criterion 2: gradient suite
// ---------------------------------------------------------------------------

struct GradStats {
    double max_rel = 0.0;
    int coords = 0;

    void note(double analytic, double fd) {
        max_rel = std::max(max_rel, testutil::rel_err(analytic, fd));
        ++coords;
    }
};

std::string criterion_gradients() {
    const auto start = Clock::now();
    std::mt19937 rng(402);
    std::mt19937 pick(403);
    GradStats stats;

    // LSTM step.
    {
        const int64_t d_in = 4, hidden = 5;
        LstmParams p(d_in, hidden, rng);
        Tensor x = testutil::random_tensor({2, d_in}, rng, true);
        Tensor h = testutil::random_tensor({2, hidden}, rng);
        Tensor c = testutil::random_tensor({2, hidden}, rng);
        Tape tape;
        Tensor loss;
        {
            TapeScope scope(tape);
            auto [hn, cn] = lstm_step(x, h, c, p);
            loss = ops::sum_all(hn);
        }
        tape.backward(loss);

        auto wx = testutil::widen(p.w_input.data());
        auto wh = testutil::widen(p.w_hidden.data());
        auto bias = testutil::widen(p.bias.data());
        const auto hd = testutil::widen(h.data());
        const auto cd = testutil::widen(c.data());
        auto xd = testutil::widen(x.data());
        auto f = [&] {
            auto [hn, cn] = refd::lstm_step(xd, hd, cd, wx, wh, bias, 2, d_in, hidden);
            double s = 0.0;
            for (double v : hn) {
                s += v;
            }
            return s;
        };
        for (int i = 0; i < 10; ++i) {
            size_t ix = pick() % wx.size();
            stats.note(p.w_input.grad()[ix], refd::central_diff(wx, ix, f));
            ix = pick() % wh.size();
            stats.note(p.w_hidden.grad()[ix], refd::central_diff(wh, ix, f));
            ix = pick() % bias.size();
            stats.note(p.bias.grad()[ix], refd::central_diff(bias, ix, f));
        }
    }

    // Residual block (includes the masked conv and train-mode batch norm).
    {
        const int64_t d = 4;
        ResidualBlockParams blk(d, rng);
        Tensor mask = causal_text_mask(3, 3);
        Tensor x = testutil::random_tensor({1, d, 4, 5}, rng, true);
        Tape tape;
        Tensor loss;
        {
            TapeScope scope(tape);
            loss = ops::sum_all(residual_block(x, blk, mask, Mode::Train));
        }
        tape.backward(loss);

        refd::ResidualBlockRef ref;
        ref.channels = d;
        ref.conv1 = testutil::widen(blk.conv1.data());
        ref.conv2 = testutil::widen(blk.conv2.data());
        ref.conv3 = testutil::widen(blk.conv3.data());
        ref.g1 = testutil::widen(blk.bn1.gamma.data());
        ref.b1 = testutil::widen(blk.bn1.beta.data());
        ref.g2 = testutil::widen(blk.bn2.gamma.data());
        ref.b2 = testutil::widen(blk.bn2.beta.data());
        ref.g3 = testutil::widen(blk.bn3.gamma.data());
        ref.b3 = testutil::widen(blk.bn3.beta.data());
        ref.mask = testutil::widen(mask.data());
        auto xd = testutil::widen(x.data());
        auto f = [&] {
            const auto y = ref.forward(xd, 1, 4, 5);
            double s = 0.0;
            for (double v : y) {
                s += v;
            }
            return s;
        };
        for (int i = 0; i < 8; ++i) {
            size_t ix = pick() % ref.conv1.size();
            stats.note(blk.conv1.grad()[ix], refd::central_diff(ref.conv1, ix, f));
            ix = pick() % ref.conv2.size();
            stats.note(blk.conv2.grad()[ix], refd::central_diff(ref.conv2, ix, f));
            ix = pick() % ref.conv3.size();
            stats.note(blk.conv3.grad()[ix], refd::central_diff(ref.conv3, ix, f));
        }
        for (int i = 0; i < 6; ++i) {
            const size_t ix = pick() % xd.size();
            stats.note(x.grad()[ix], refd::central_diff(xd, ix, f));
        }
    }

    // Bare masked convolution.
    {
        Tensor x = testutil::random_tensor({1, 2, 4, 5}, rng);
        Tensor kern = testutil::random_tensor({3, 2, 3, 3}, rng, true);
        Tensor mask = causal_text_mask(3, 3);
        Tape tape;
        Tensor loss;
        {
            TapeScope scope(tape);
            loss = ops::sum_all(ops::conv2d(x, kern, 1, 1, mask));
        }
        tape.backward(loss);

        const auto xd = testutil::widen(x.data());
        auto kd = testutil::widen(kern.data());
        const auto md = testutil::widen(mask.data());
        auto f = [&] {
            const auto y = refd::conv2d(xd, kd, md, 1, 2, 4, 5, 3, 3, 3);
            double s = 0.0;
            for (double v : y) {
                s += v;
            }
            return s;
        };
        for (int i = 0; i < 20; ++i) {
            const size_t ix = pick() % kd.size();
            stats.note(kern.grad()[ix], refd::central_diff(kd, ix, f));
        }
    }

    // SE block.
    {
        const int64_t d_c = 6, t_c = 10;
        SeParams se(d_c, t_c, rng);
        Tensor fused = testutil::random_tensor({1, 1, t_c, d_c}, rng, true);
        Tape tape;
        Tensor loss;
        {
            TapeScope scope(tape);
            Tensor w = se_weights(fused, se);
            loss = ops::sum_all(ops::slice_lastdim(w, 0, t_c / 2));
        }
        tape.backward(loss);

        refd::SeRef ref;
        ref.t_c = t_c;
        ref.d_c = d_c;
        ref.w1 = testutil::widen(se.w1.data());
        ref.b1 = testutil::widen(se.b1.data());
        ref.w2 = testutil::widen(se.w2.data());
        ref.b2 = testutil::widen(se.b2.data());
        ref.w3 = testutil::widen(se.w3.data());
        ref.b3 = testutil::widen(se.b3.data());
        auto fd_buf = testutil::widen(fused.data());
        auto f = [&] {
            const auto w = ref.forward(fd_buf);
            double s = 0.0;
            for (int64_t j = 0; j < t_c / 2; ++j) {
                s += w[static_cast<size_t>(j)];
            }
            return s;
        };
        for (int i = 0; i < 7; ++i) {
            size_t ix = pick() % ref.w1.size();
            stats.note(se.w1.grad()[ix], refd::central_diff(ref.w1, ix, f));
            ix = pick() % ref.w2.size();
            stats.note(se.w2.grad()[ix], refd::central_diff(ref.w2, ix, f));
            ix = pick() % ref.w3.size();
            stats.note(se.w3.grad()[ix], refd::central_diff(ref.w3, ix, f));
        }
    }

    // Projection + masked cross entropy.
    {
        const int64_t rows = 6, d = 5, vocab = 9;
        Tensor x = testutil::random_tensor({1, rows, d}, rng, true);
        Tensor w = testutil::random_tensor({vocab, d}, rng, true);
        Tensor b = testutil::random_tensor({vocab}, rng, true);
        IdMatrix targets{1, rows, {}};
        IdMatrix mask{1, rows, {}};
        for (int64_t i = 0; i < rows; ++i) {
            targets.values.push_back(static_cast<int32_t>(pick() % vocab));
            mask.values.push_back(i == 2 ? 0 : 1);
        }
        Tape tape;
        Tensor loss;
        {
            TapeScope scope(tape);
            loss = ops::masked_cross_entropy(ops::fully_connected(x, w, b), targets, mask);
        }
        tape.backward(loss);

        auto xd = testutil::widen(x.data());
        auto wd = testutil::widen(w.data());
        auto bd = testutil::widen(b.data());
        auto f = [&] {
            return refd::projection_loss(xd, wd, bd, targets.values, mask.values, rows, d,
                                         vocab);
        };
        for (int i = 0; i < 10; ++i) {
            size_t ix = pick() % wd.size();
            stats.note(w.grad()[ix], refd::central_diff(wd, ix, f));
            ix = pick() % xd.size();
            stats.note(x.grad()[ix], refd::central_diff(xd, ix, f));
        }
        for (int i = 0; i < 4; ++i) {
            const size_t ix = pick() % bd.size();
            stats.note(b.grad()[ix], refd::central_diff(bd, ix, f));
        }
    }

    expect(stats.max_rel < 1e-4,
           "max relative error " + std::to_string(stats.max_rel) + " over " +
               std::to_string(stats.coords) + " coordinates");
    const double secs = std::chrono::duration<double>(Clock::now() - start).count();
    expect(secs < 120.0, "runtime budget exceeded");
    std::ostringstream os;
    os << stats.coords << " coordinates, max rel err " << stats.max_rel;
    return os.str();
}

// ---------------------------------------------------------------------------
// criterion 3: energy invariants
// ---------------------------------------------------------------------------

std::string criterion_energies() {
    std::mt19937 rng(404);
    const int64_t t_c = 60;
    const int64_t t_v = 40;
    const int64_t d_c = 8;
    SeParams se(d_c, t_c, rng);

    int64_t checked = 0;
    const int64_t rows_per_pass = 100;
    for (int pass = 0; pass < 100; ++pass) {
        Tensor fused =
            testutil::random_tensor({1, rows_per_pass, t_c, d_c}, rng, false, -4.0f, 4.0f);
        Tensor w = se_weights(fused, se);
        auto wd = w.data();
        for (int64_t r = 0; r < rows_per_pass; ++r) {
            std::span<const float> row(wd.data() + r * t_c, static_cast<size_t>(t_c));
            auto [e_v, e_a] = activation_energies(row, t_v);
            const double total = e_v + e_a;
            expect(total >= 1.0 / t_c - 1e-9 && total <= 1.0 + 1e-9,
                   "energy sum " + std::to_string(total) + " out of range");
            ++checked;
        }
    }

    // Uniform weights (zero SE parameters) must sit at the lower bound.
    SeParams zero_se(d_c, t_c, rng);
    for (Tensor* t : {&zero_se.w1, &zero_se.b1, &zero_se.w2, &zero_se.b2, &zero_se.w3,
                      &zero_se.b3}) {
        std::fill(t->data().begin(), t->data().end(), 0.0f);
    }
    Tensor fused = testutil::random_tensor({1, 1, t_c, d_c}, rng);
    Tensor uniform_w = se_weights(fused, zero_se);
    auto [u_v, u_a] = activation_energies(uniform_w.data(), t_v);
    expect(std::abs(u_v + u_a - 1.0 / t_c) < 1e-9, "uniform case misses 1/T_c");

    std::vector<float> onehot(static_cast<size_t>(t_c), 0.0f);
    onehot[7] = 1.0f;
    auto [o_v, o_a] = activation_energies(onehot, t_v);
    expect(std::abs(o_v + o_a - 1.0) < 1e-6, "one-hot case misses 1");

    return std::to_string(checked) + " weight rows fuzzed, bounds and extremes hold";
}

// ---------------------------------------------------------------------------
// criterion 4: toy overfit through the CLI
// ---------------------------------------------------------------------------

std::string criterion_overfit(std::filesystem::path* checkpoint_out,
                              std::filesystem::path* data_dir_out) {
    const auto start = Clock::now();
    const auto dir = fresh_dir("overfit");
    run_cli("make-synthetic --out-dir " + (dir / "data").string() + " --clips 8 --seed 7");
    run_cli("build-vocab --manifest " + (dir / "data" / "manifest.json").string() + " --out " +
            (dir / "vocab.json").string());

    write_toy_config(dir / "config.json", toy_config(2, 7));
    run_cli("train --config " + (dir / "config.json").string() + " --manifest " +
            (dir / "data" / "manifest.json").string() + " --vocab " +
            (dir / "vocab.json").string() + " --out-dir " + (dir / "run").string());

    const auto checkpoint = dir / "run" / "checkpoint.mmcp";
    expect(std::filesystem::exists(checkpoint), "missing checkpoint");

    // Teacher-forced accuracy over the full training set.
    CaptionModel model = CaptionModel::load_checkpoint(checkpoint);
    auto records = load_manifest(dir / "data" / "manifest.json");
    auto split = filter_split(records, "train");
    BatchStream stream(split, model.vocab(), model.config().batch_config(), 1, 0);
    double accuracy = 0.0;
    int64_t batches = 0;
    while (auto batch = stream.next()) {
        ForwardOutput out = model.forward(*batch, Mode::Eval);
        accuracy += teacher_forced_accuracy(out.logits, batch->tokens_out, batch->loss_mask);
        ++batches;
    }
    accuracy /= static_cast<double>(batches);
    expect(accuracy == 1.0, "teacher-forced accuracy " + std::to_string(accuracy) + " != 1");

    // Greedy decoding must reproduce all 8 captions verbatim.
    run_cli("caption --checkpoint " + checkpoint.string() + " --manifest " +
            (dir / "data" / "manifest.json").string() + " --split train --out " +
            (dir / "captions.json").string());
    std::ifstream cap_in(dir / "captions.json");
    json captions;
    cap_in >> captions;
    expect(captions.size() == 8, "expected 8 captions");
    std::map<std::string, std::string> expected;
    for (const auto& r : records) {
        expected[r.id] = r.captions[0];
    }
    int reproduced = 0;
    for (const json& c : captions) {
        if (expected.at(c.at("id").get<std::string>()) == c.at("caption").get<std::string>()) {
            ++reproduced;
        }
    }
    expect(reproduced == 8, std::to_string(reproduced) + "/8 captions reproduced");

    const double secs = std::chrono::duration<double>(Clock::now() - start).count();
    expect(secs < 300.0, "wall clock budget of 5 minutes exceeded");

    *checkpoint_out = checkpoint;
    *data_dir_out = dir;
    std::ostringstream os;
    os << "accuracy 1.0, 8/8 captions reproduced";
    return os.str();
}

// ---------------------------------------------------------------------------
// criterion 5: modality attribution on held-out clips
// ---------------------------------------------------------------------------

std::string criterion_attribution(const std::filesystem::path& checkpoint) {
    const auto dir = fresh_dir("attribution");
    run_cli("make-synthetic --out-dir " + (dir / "data").string() + " --clips 32 --seed 8");
    run_cli("explain --checkpoint " + checkpoint.string() + " --manifest " +
            (dir / "data" / "manifest.json").string() + " --split train --out " +
            (dir / "explain.jsonl").string());

    SyntheticTruth truth = load_synthetic_truth(dir / "data" / "truth.json");
    std::set<std::string> visual_words(truth.visual_words.begin(), truth.visual_words.end());
    std::set<std::string> audio_words(truth.audio_words.begin(), truth.audio_words.end());

    int64_t audio_total = 0, audio_hit = 0, visual_total = 0, visual_hit = 0;
    std::ifstream in(dir / "explain.jsonl");
    std::string line;
    int64_t lines = 0;
    while (std::getline(in, line)) {
        if (line.empty()) {
            continue;
        }
        const json doc = json::parse(line);
        ++lines;
        for (const json& w : doc.at("words")) {
            const std::string word = w.at("word").get<std::string>();
            const std::string decision = w.at("decision").get<std::string>();
            const double e_v = w.at("e_v").get<double>();
            const double e_a = w.at("e_a").get<double>();
            expect(e_v + e_a >= 1.0 / 16.0 - 1e-9 && e_v + e_a <= 1.0 + 1e-9,
                   "emitted energies out of range");
            if (audio_words.count(word)) {
                ++audio_total;
                audio_hit += decision == "audio" ? 1 : 0;
            } else if (visual_words.count(word)) {
                ++visual_total;
                visual_hit += decision == "visual" ? 1 : 0;
            }
        }
    }
    expect(lines == 32, "expected 32 explain lines, got " + std::to_string(lines));
    expect(audio_total > 0 && visual_total > 0, "no lexicon words were generated");

    const double audio_rate = static_cast<double>(audio_hit) / audio_total;
    const double visual_rate = static_cast<double>(visual_hit) / visual_total;
    std::ostringstream os;
    os << "audio " << audio_hit << "/" << audio_total << " (" << audio_rate * 100 << "%), visual "
       << visual_hit << "/" << visual_total << " (" << visual_rate * 100 << "%)";
    expect(audio_rate >= 0.9, "audio attribution below 90%: " + os.str());
    expect(visual_rate >= 0.9, "visual attribution below 90%: " + os.str());
    return os.str();
}

// ---------------------------------------------------------------------------
// criterion 6: metric oracles
// ---------------------------------------------------------------------------

std::string criterion_metrics() {
    EvalCorpus identity;
    identity.entries.push_back({"c1", tokenize("a man is singing a song"),
                                {tokenize("a man is singing a song")}});
    expect(bleu4(identity).score == 1.0, "bleu identity not exactly 1");

    EvalCorpus clipped;
    clipped.entries.push_back({"c1", tokenize("the the the the the the the"),
                               {tokenize("the cat is on the mat")}});
    const double p1 = bleu4(clipped).precisions[0];
    expect(std::abs(p1 - 2.0 / 7.0) < 1e-9, "clipped precision " + std::to_string(p1));

    EvalCorpus crossed;
    crossed.entries.push_back({"c1", {"a", "b", "c", "d"}, {{"a", "c", "b", "d"}}});
    expect(std::abs(rouge_l(crossed) - 0.75) < 1e-9, "rouge crossed-pair case");

    // Brute-force TF-IDF cosine on a 3-clip corpus with disjoint content.
    EvalCorpus corpus;
    corpus.entries.push_back({"c1", tokenize("a red bird sits quietly"),
                              {tokenize("a red bird sits quietly"),
                               tokenize("a red bird sits calmly")}});
    corpus.entries.push_back({"c2", tokenize("the blue whale swims deep"),
                              {tokenize("the blue whale swims deep")}});
    corpus.entries.push_back({"c3", tokenize("one green frog jumps high"),
                              {tokenize("one green frog jumps high"),
                               tokenize("one green frog leaps high")}});

    // Independent hand computation: per clip and n, cosine between count*idf
    // vectors of candidate and each reference.
    const double n_docs = 3.0;
    auto grams = [](const std::vector<std::string>& s, int n) {
        std::map<std::string, double> g;
        for (int i = 0; i + n <= static_cast<int>(s.size()); ++i) {
            std::string key;
            for (int j = 0; j < n; ++j) {
                key += s[static_cast<size_t>(i + j)] + "|";
            }
            g[key] += 1.0;
        }
        return g;
    };
    std::array<std::map<std::string, double>, 4> df;
    for (const auto& e : corpus.entries) {
        for (int n = 1; n <= 4; ++n) {
            std::set<std::string> seen;
            for (const auto& ref : e.references) {
                for (const auto& [g, c] : grams(ref, n)) {
                    seen.insert(g);
                }
            }
            for (const auto& g : seen) {
                df[static_cast<size_t>(n - 1)][g] += 1.0;
            }
        }
    }
    double oracle = 0.0;
    for (const auto& e : corpus.entries) {
        double clip = 0.0;
        for (int n = 1; n <= 4; ++n) {
            auto weigh = [&](const std::map<std::string, double>& counts) {
                std::map<std::string, double> out;
                for (const auto& [g, c] : counts) {
                    const auto& table = df[static_cast<size_t>(n - 1)];
                    const double d = std::max(1.0, table.count(g) ? table.at(g) : 1.0);
                    out[g] = c * std::log(n_docs / d);
                }
                return out;
            };
            const auto cv = weigh(grams(e.candidate, n));
            double acc = 0.0;
            for (const auto& ref : e.references) {
                const auto rv = weigh(grams(ref, n));
                double dot = 0.0, na = 0.0, nb = 0.0;
                for (const auto& [g, v] : cv) {
                    na += v * v;
                    if (rv.count(g)) {
                        dot += v * rv.at(g);
                    }
                }
                for (const auto& [g, v] : rv) {
                    nb += v * v;
                }
                acc += (na == 0.0 || nb == 0.0) ? 0.0 : dot / std::sqrt(na * nb);
            }
            clip += acc / static_cast<double>(e.references.size());
        }
        oracle += 10.0 * clip / 4.0;
    }
    oracle /= n_docs;
    const double got = cider(corpus);
    expect(std::abs(got - oracle) < 1e-6,
           "cider " + std::to_string(got) + " vs oracle " + std::to_string(oracle));

    std::ostringstream os;
    os << "bleu 1.0 exact, p1 2/7, rouge 0.75, cider matches oracle (" << got << ")";
    return os.str();
}

// ---------------------------------------------------------------------------
// criterion 7: block-count ablation harness
// ---------------------------------------------------------------------------

std::string criterion_ablation(const std::filesystem::path& data_dir) {
    const auto dir = fresh_dir("ablation");
    const auto manifest = data_dir / "data" / "manifest.json";
    const auto vocab = data_dir / "vocab.json";

    std::ostringstream summary;
    for (int64_t k : {5, 10, 15}) {
        ModelConfig config = toy_config(k, 7);
        config.max_epochs = 3;
        const auto cfg_path = dir / ("config_k" + std::to_string(k) + ".json");
        write_toy_config(cfg_path, config);
        const auto run_dir = dir / ("run_k" + std::to_string(k));
        run_cli("train --config " + cfg_path.string() + " --manifest " + manifest.string() +
                " --vocab " + vocab.string() + " --out-dir " + run_dir.string());
        run_cli("caption --checkpoint " + (run_dir / "checkpoint.mmcp").string() +
                " --manifest " + manifest.string() + " --split train --out " +
                (run_dir / "captions.json").string());
        run_cli("eval --candidates " + (run_dir / "captions.json").string() + " --manifest " +
                manifest.string() + " --split train --out " + (run_dir / "metrics.json").string());

        std::ifstream in(run_dir / "metrics.json");
        json metrics;
        in >> metrics;
        summary << "k=" << k << " bleu4=" << metrics.at("bleu4").get<double>()
                << " cider=" << metrics.at("cider").get<double>() << "  ";
    }
    return summary.str();
}

// ---------------------------------------------------------------------------
// criterion 8: round trips
// ---------------------------------------------------------------------------

std::string criterion_round_trips() {
    const auto dir = fresh_dir("roundtrip");
    std::mt19937 rng(405);
    FeatureMatrix m;
    m.rows = 9;
    m.cols = 6;
    std::uniform_real_distribution<float> dist(-2.0f, 2.0f);
    for (int i = 0; i < 54; ++i) {
        m.values.push_back(dist(rng));
    }
    save_feature_matrix(dir / "a.mmcf", m);
    save_feature_matrix(dir / "b.mmcf", load_feature_matrix(dir / "a.mmcf"));
    expect(file_bytes(dir / "a.mmcf") == file_bytes(dir / "b.mmcf"),
           "mmcf round trip not byte-identical");

    // Short training run, then checkpoint reload must give bitwise logits.
    auto made = make_synthetic(dir / "data", 4, 12);
    auto records = load_manifest(made.manifest_path);
    std::vector<std::string> captions;
    for (const auto& r : records) {
        captions.insert(captions.end(), r.captions.begin(), r.captions.end());
    }
    Vocabulary vocab = Vocabulary::build(captions, 1);
    ModelConfig config = toy_config(1, 13);
    config.batch_size = 4;
    config.max_epochs = 2;
    TrainResult result = train_model(records, config, vocab, dir / "run");

    CaptionModel original = CaptionModel::load_checkpoint(result.checkpoint_path);
    original.save_checkpoint(dir / "resaved.mmcp");
    CaptionModel reloaded = CaptionModel::load_checkpoint(dir / "resaved.mmcp");

    std::mt19937 rng2(406);
    Tensor visual = testutil::random_tensor({1, config.t_v, config.visual_input_dim}, rng2);
    Tensor audio = testutil::random_tensor({1, config.t_a, config.audio_input_dim}, rng2);
    IdMatrix tokens{1, 6, std::vector<int32_t>(6, Vocabulary::kSos)};
    ForwardOutput a = original.forward(visual, audio, tokens, Mode::Eval);
    ForwardOutput b = reloaded.forward(visual, audio, tokens, Mode::Eval);
    expect(std::equal(a.logits.data().begin(), a.logits.data().end(), b.logits.data().begin()),
           "checkpoint reload changed eval logits");
    return "mmcf byte-identical, checkpoint logits bitwise equal";
}

} // namespace

int main() {
    std::filesystem::create_directories(work_dir());
    Harness harness;

    harness.run(1, "autoregressivity", criterion_autoregressivity);
    harness.run(2, "gradient suite", criterion_gradients);
    harness.run(3, "energy invariants", criterion_energies);

    std::filesystem::path checkpoint;
    std::filesystem::path overfit_dir;
    harness.run(4, "toy overfit", [&] { return criterion_overfit(&checkpoint, &overfit_dir); });
    harness.run(5, "modality attribution", [&] {
        expect(!checkpoint.empty(), "criterion 4 checkpoint unavailable");
        return criterion_attribution(checkpoint);
    });
    harness.run(6, "metric oracles", criterion_metrics);
    harness.run(7, "block-count ablation", [&] {
        expect(!overfit_dir.empty(), "criterion 4 data unavailable");
        return criterion_ablation(overfit_dir);
    });
    harness.run(8, "round trips", criterion_round_trips);

    if (harness.failures == 0) {
        std::printf("acceptance: all 8 criteria passed\n");
    } else {
        std::printf("acceptance: %d criteria FAILED\n", harness.failures);
    }
    return harness.failures;
}
