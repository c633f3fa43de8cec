#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace mmcap {

// Tokenized candidate/reference sentences for one clip.
struct EvalEntry {
    std::string id;
    std::vector<std::string> candidate;
    std::vector<std::vector<std::string>> references; // at least one
};

struct EvalCorpus {
    std::vector<EvalEntry> entries;

    void validate() const; // nonempty, unique ids, >=1 reference each
};

struct Bleu4Result {
    double score = 0.0;
    std::array<double, 4> precisions{}; // clipped n-gram precisions before smoothing
    double brevity_penalty = 0.0;
    int64_t candidate_length = 0;
    int64_t reference_length = 0;
};

// Corpus-level BLEU with clipped precisions, epsilon smoothing on zero
// precisions and closest-reference-length brevity penalty (ties prefer the
// shorter reference).
Bleu4Result bleu4(const EvalCorpus& corpus);

// Mean over clips of the best-reference LCS F-measure with beta = 1.2.
double rouge_l(const EvalCorpus& corpus, double beta = 1.2);

// Mean over n of average TF-IDF n-gram cosine against each reference,
// scaled by 10. Needs at least two clips for a meaningful IDF.
double cider(const EvalCorpus& corpus);

} // namespace mmcap
