#include <string>
#include <unordered_set>
#include <vector>

#include "dirguide/scoring.hpp"
#include "text_util.hpp"

namespace dirguide {

namespace {

// Standard 179-entry English stopword list, canonical spelling.
const char* kStopwords[] = {
    "i",         "me",        "my",       "myself",  "we",        "our",       "ours",
    "ourselves", "you",       "you're",   "you've",  "you'll",    "you'd",     "your",
    "yours",     "yourself",  "yourselves", "he",    "him",       "his",       "himself",
    "she",       "she's",     "her",      "hers",    "herself",   "it",        "it's",
    "its",       "itself",    "they",     "them",    "their",     "theirs",    "themselves",
    "what",      "which",     "who",      "whom",    "this",      "that",      "that'll",
    "these",     "those",     "am",       "is",      "are",       "was",       "were",
    "be",        "been",      "being",    "have",    "has",       "had",       "having",
    "do",        "does",      "did",      "doing",   "a",         "an",        "the",
    "and",       "but",       "if",       "or",      "because",   "as",        "until",
    "while",     "of",        "at",       "by",      "for",       "with",      "about",
    "against",   "between",   "into",     "through", "during",    "before",    "after",
    "above",     "below",     "to",       "from",    "up",        "down",      "in",
    "out",       "on",        "off",      "over",    "under",     "again",     "further",
    "then",      "once",      "here",     "there",   "when",      "where",     "why",
    "how",       "all",       "any",      "both",    "each",      "few",       "more",
    "most",      "other",     "some",     "such",    "no",        "nor",       "not",
    "only",      "own",       "same",     "so",      "than",      "too",       "very",
    "s",         "t",         "can",      "will",    "just",      "don",       "don't",
    "should",    "should've", "now",      "d",       "ll",        "m",         "o",
    "re",        "ve",        "y",        "ain",     "aren",      "aren't",    "couldn",
    "couldn't",  "didn",      "didn't",   "doesn",   "doesn't",   "hadn",      "hadn't",
    "hasn",      "hasn't",    "haven",    "haven't", "isn",       "isn't",     "ma",
    "mightn",    "mightn't",  "mustn",    "mustn't", "needn",     "needn't",   "shan",
    "shan't",    "shouldn",   "shouldn't", "wasn",   "wasn't",    "weren",     "weren't",
    "won",       "won't",     "wouldn",   "wouldn't"};

constexpr const char* kVersion = "en-179-v1";

std::string strip_punct(const std::string& word) {
    std::string out;
    out.reserve(word.size());
    for (char c : word) {
        if (c != '\'' && c != '-') out += c;
    }
    return out;
}

const std::unordered_set<std::string>& lookup_set() {
    // Tokens reach is_stopword after punctuation stripping, so the set holds
    // the stripped forms ("you're" matches as "youre").
    static const std::unordered_set<std::string> set = [] {
        std::unordered_set<std::string> s;
        for (const char* w : kStopwords) s.insert(strip_punct(w));
        return s;
    }();
    return set;
}

}  // namespace

const std::vector<std::string>& stopword_list() {
    static const std::vector<std::string> list(std::begin(kStopwords), std::end(kStopwords));
    return list;
}

const char* stopword_version() { return kVersion; }

const char* ScoringConfig::stopword_version_default() { return kVersion; }

bool is_stopword(const std::string& lowercase_token) {
    return lookup_set().count(lowercase_token) > 0;
}

}  // namespace dirguide
