#include "dirguide/scoring.hpp"

#include <algorithm>

#include "text_util.hpp"

namespace dirguide {

int TokenBag::total() const {
    int n = 0;
    for (const auto& [_, c] : counts) n += c;
    return n;
}

TokenBag tokenize(const std::string& text) {
    using namespace detail;
    TokenBag bag;
    std::string word;
    std::size_t i = 0;
    auto flush = [&] {
        if (!word.empty() && !is_stopword(word)) bag.counts[word] += 1;
        word.clear();
    };
    while (i < text.size()) {
        const std::uint32_t cp = next_codepoint(text, i);
        if (is_space_codepoint(cp)) {
            flush();
        } else if (is_punct_codepoint(cp)) {
            // dropped in place; punctuation does not split words ("don't" -> "dont")
        } else if (cp < 0x80) {
            word += static_cast<char>(std::tolower(static_cast<int>(cp)));
        } else {
            append_utf8(word, cp);
        }
    }
    flush();
    return bag;
}

double precision(const TokenBag& pred, const TokenBag& truth) {
    const int denom = pred.total();
    if (denom == 0) return 0.0;
    int overlap = 0;
    for (const auto& [word, count] : pred.counts) {
        auto it = truth.counts.find(word);
        if (it != truth.counts.end()) overlap += std::min(count, it->second);
    }
    return static_cast<double>(overlap) / static_cast<double>(denom);
}

bool is_correct(const std::string& pred_text, const std::vector<std::string>& answers,
                const ScoringConfig& cfg) {
    const TokenBag pred = tokenize(pred_text);
    double best = -1.0;
    for (const auto& answer : answers) {
        const TokenBag truth = tokenize(answer);
        if (truth.empty()) continue;  // all-stopword ground truth carries no signal
        best = std::max(best, precision(pred, truth));
    }
    if (best < 0.0) return false;
    return best >= cfg.threshold_e;
}

}  // namespace dirguide
