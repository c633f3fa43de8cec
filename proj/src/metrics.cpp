#include "mmcap/metrics.hpp"

#include "mmcap/common.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

namespace mmcap {

namespace {

constexpr double kPrecisionFloor = 1e-9;
constexpr int kMaxOrder = 4;

// N-grams are joined with an unprintable separator so tokens cannot collide.
std::string gram_key(const std::vector<std::string>& tokens, size_t start, int n) {
    std::string key;
    for (int i = 0; i < n; ++i) {
        if (i) {
            key.push_back('\x1f');
        }
        key += tokens[start + static_cast<size_t>(i)];
    }
    return key;
}

std::map<std::string, int64_t> gram_counts(const std::vector<std::string>& tokens, int n) {
    std::map<std::string, int64_t> counts;
    if (static_cast<int>(tokens.size()) < n) {
        return counts;
    }
    for (size_t i = 0; i + static_cast<size_t>(n) <= tokens.size(); ++i) {
        ++counts[gram_key(tokens, i, n)];
    }
    return counts;
}

int64_t lcs_length(const std::vector<std::string>& a, const std::vector<std::string>& b) {
    const size_t m = a.size();
    const size_t n = b.size();
    std::vector<int64_t> prev(n + 1, 0);
    std::vector<int64_t> cur(n + 1, 0);
    for (size_t i = 1; i <= m; ++i) {
        for (size_t j = 1; j <= n; ++j) {
            if (a[i - 1] == b[j - 1]) {
                cur[j] = prev[j - 1] + 1;
            } else {
                cur[j] = std::max(prev[j], cur[j - 1]);
            }
        }
        std::swap(prev, cur);
    }
    return prev[n];
}

} // namespace

void EvalCorpus::validate() const {
    require(!entries.empty(), "empty_corpus", "evaluation corpus has no clips");
    std::set<std::string> ids;
    for (const EvalEntry& e : entries) {
        require(ids.insert(e.id).second, "duplicate_id", "duplicate clip id " + e.id);
        require(!e.references.empty(), "no_references",
                "clip " + e.id + " has no reference sentences");
    }
}

Bleu4Result bleu4(const EvalCorpus& corpus) {
    corpus.validate();
    Bleu4Result result;
    std::array<int64_t, kMaxOrder> matched{};
    std::array<int64_t, kMaxOrder> total{};
    int64_t candidate_len = 0;
    int64_t reference_len = 0;

    for (const EvalEntry& e : corpus.entries) {
        const int64_t c_len = static_cast<int64_t>(e.candidate.size());
        candidate_len += c_len;

        // Effective reference length: closest to the candidate, shorter wins ties.
        int64_t best_ref = static_cast<int64_t>(e.references[0].size());
        for (const auto& ref : e.references) {
            const int64_t r_len = static_cast<int64_t>(ref.size());
            const int64_t d_new = std::llabs(r_len - c_len);
            const int64_t d_old = std::llabs(best_ref - c_len);
            if (d_new < d_old || (d_new == d_old && r_len < best_ref)) {
                best_ref = r_len;
            }
        }
        reference_len += best_ref;

        for (int n = 1; n <= kMaxOrder; ++n) {
            auto cand = gram_counts(e.candidate, n);
            std::map<std::string, int64_t> max_ref;
            for (const auto& ref : e.references) {
                for (const auto& [gram, count] : gram_counts(ref, n)) {
                    max_ref[gram] = std::max(max_ref[gram], count);
                }
            }
            for (const auto& [gram, count] : cand) {
                auto it = max_ref.find(gram);
                const int64_t clip = it == max_ref.end() ? 0 : std::min(count, it->second);
                matched[static_cast<size_t>(n - 1)] += clip;
                total[static_cast<size_t>(n - 1)] += count;
            }
        }
    }

    result.candidate_length = candidate_len;
    result.reference_length = reference_len;
    double log_sum = 0.0;
    for (int n = 0; n < kMaxOrder; ++n) {
        const double p = total[static_cast<size_t>(n)] > 0
                             ? static_cast<double>(matched[static_cast<size_t>(n)]) /
                                   static_cast<double>(total[static_cast<size_t>(n)])
                             : 0.0;
        result.precisions[static_cast<size_t>(n)] = p;
        log_sum += std::log(std::max(p, kPrecisionFloor));
    }
    if (candidate_len == 0) {
        result.brevity_penalty = 0.0;
        result.score = 0.0;
        return result;
    }
    result.brevity_penalty =
        candidate_len > reference_len
            ? 1.0
            : std::exp(1.0 - static_cast<double>(reference_len) / static_cast<double>(candidate_len));
    result.score = result.brevity_penalty * std::exp(log_sum / kMaxOrder);
    return result;
}

double rouge_l(const EvalCorpus& corpus, double beta) {
    corpus.validate();
    double sum = 0.0;
    for (const EvalEntry& e : corpus.entries) {
        double best = 0.0;
        for (const auto& ref : e.references) {
            if (e.candidate.empty() || ref.empty()) {
                continue;
            }
            const double lcs = static_cast<double>(lcs_length(e.candidate, ref));
            if (lcs == 0.0) {
                continue;
            }
            const double prec = lcs / static_cast<double>(e.candidate.size());
            const double rec = lcs / static_cast<double>(ref.size());
            const double b2 = beta * beta;
            const double f = (1.0 + b2) * rec * prec / (rec + b2 * prec);
            best = std::max(best, f);
        }
        sum += best;
    }
    return sum / static_cast<double>(corpus.entries.size());
}

double cider(const EvalCorpus& corpus) {
    corpus.validate();
    require(corpus.entries.size() >= 2, "too_few_clips",
            "cider needs at least 2 clips for document frequencies");
    const double log_n = std::log(static_cast<double>(corpus.entries.size()));

    // Document frequency of each n-gram over per-clip reference sets.
    std::array<std::map<std::string, int64_t>, kMaxOrder> df;
    for (const EvalEntry& e : corpus.entries) {
        std::array<std::set<std::string>, kMaxOrder> seen;
        for (const auto& ref : e.references) {
            for (int n = 1; n <= kMaxOrder; ++n) {
                for (const auto& [gram, count] : gram_counts(ref, n)) {
                    seen[static_cast<size_t>(n - 1)].insert(gram);
                }
            }
        }
        for (int n = 0; n < kMaxOrder; ++n) {
            for (const auto& gram : seen[static_cast<size_t>(n)]) {
                ++df[static_cast<size_t>(n)][gram];
            }
        }
    }

    auto tfidf = [&](const std::map<std::string, int64_t>& counts, int n) {
        std::map<std::string, double> vec;
        for (const auto& [gram, count] : counts) {
            auto it = df[static_cast<size_t>(n)].find(gram);
            const double d = it == df[static_cast<size_t>(n)].end()
                                 ? 1.0
                                 : static_cast<double>(std::max<int64_t>(1, it->second));
            vec[gram] = static_cast<double>(count) * (log_n - std::log(d));
        }
        return vec;
    };
    auto cosine = [](const std::map<std::string, double>& a,
                     const std::map<std::string, double>& b) {
        double dot = 0.0;
        double na = 0.0;
        double nb = 0.0;
        for (const auto& [gram, v] : a) {
            na += v * v;
            auto it = b.find(gram);
            if (it != b.end()) {
                dot += v * it->second;
            }
        }
        for (const auto& [gram, v] : b) {
            nb += v * v;
        }
        if (na == 0.0 || nb == 0.0) {
            return 0.0;
        }
        return dot / (std::sqrt(na) * std::sqrt(nb));
    };

    double corpus_sum = 0.0;
    for (const EvalEntry& e : corpus.entries) {
        double clip_score = 0.0;
        for (int n = 1; n <= kMaxOrder; ++n) {
            const auto cand_vec = tfidf(gram_counts(e.candidate, n), n - 1);
            double ref_sum = 0.0;
            for (const auto& ref : e.references) {
                ref_sum += cosine(cand_vec, tfidf(gram_counts(ref, n), n - 1));
            }
            clip_score += ref_sum / static_cast<double>(e.references.size());
        }
        corpus_sum += 10.0 * clip_score / kMaxOrder;
    }
    return corpus_sum / static_cast<double>(corpus.entries.size());
}

} // namespace mmcap
