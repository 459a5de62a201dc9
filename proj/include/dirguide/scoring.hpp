#pragma once

#include <map>
#include <string>
#include <vector>

namespace dirguide {

/// Multiset of lowercase, punctuation-free, non-stopword tokens.
struct TokenBag {
    std::map<std::string, int> counts;

    bool empty() const { return counts.empty(); }
    int total() const;
    bool operator==(const TokenBag&) const = default;
};

struct ScoringConfig {
    double threshold_e = 0.5;
    std::string stopword_list_id = stopword_version_default();

    static const char* stopword_version_default();
};

/// Lowercases, strips punctuation, splits on whitespace, drops stopwords.
TokenBag tokenize(const std::string& text);

/// Word-overlap precision: sum_w min(pred[w], truth[w]) / sum_w pred[w].
/// 0 when pred is empty.
double precision(const TokenBag& pred, const TokenBag& truth);

/// True iff max over answers of precision(tokenize(pred), tokenize(answer))
/// reaches cfg.threshold_e. Answers that tokenize empty are skipped; if all
/// do, the prediction counts as wrong.
bool is_correct(const std::string& pred_text, const std::vector<std::string>& answers,
                const ScoringConfig& cfg);

/// The embedded English stopword list, canonical spelling, fixed order.
const std::vector<std::string>& stopword_list();
/// Version stamp recorded in run metadata.
const char* stopword_version();
/// Membership test against the punctuation-normalized form of the list.
bool is_stopword(const std::string& lowercase_token);

}  // namespace dirguide
