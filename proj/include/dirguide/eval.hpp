#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "dirguide/ingest.hpp"
#include "dirguide/oracle.hpp"
#include "dirguide/types.hpp"

namespace dirguide {

/// Prompt protocol for benchmarking. SingleRound asks for one of six options
/// directly; TwoRound first separates {unchanged, reframe, none} and only
/// asks for a direction when the first answer is reframe.
struct PromptProtocol {
    enum class Mode { SingleRound, TwoRound };

    Mode mode = Mode::SingleRound;
    std::string single_template;  // placeholders {QUESTION} {OPTIONS}
    std::string round1_template;  // {QUESTION}
    std::string round2_template;  // {QUESTION} {RESULT}

    static PromptProtocol defaults(Mode mode);
    /// defaults with any of single_round.txt / two_round_1.txt /
    /// two_round_2.txt found in dir overriding the built-in text.
    static PromptProtocol from_dir(Mode mode, const std::filesystem::path& dir);

    static std::optional<Mode> parse_mode(const std::string& name);
    static const char* mode_name(Mode mode);
};

struct PerClassMetrics {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    std::size_t support = 0;   // true-label count including excluded samples
    std::size_t excluded = 0;  // of which excluded before scoring
};

/// Confusion rows are true labels, columns predictions, both in
/// Left,Right,Up,Down,Unchanged(O),None(X) order.
struct EvalReport {
    std::map<GuidanceLabel, PerClassMetrics> per_class;
    double macro_f1 = 0.0;
    double accuracy = 0.0;
    double acc_f = 0.0;  // accuracy over the four directional rows only
    std::array<std::array<std::size_t, kNumLabels>, kNumLabels> confusion{};
    std::size_t excluded = 0;
    std::size_t excluded_unparseable = 0;
    std::size_t excluded_failed = 0;
    std::size_t total = 0;
    bool empty_after_exclusion = false;
};

struct EvalOptions {
    int max_concurrency = 4;
    std::optional<std::uint64_t> shuffle_seed;  // per-query letter shuffling when set
    TranscriptLog* log = nullptr;
};

/// Maps a raw model response to a label: first a standalone option letter at
/// the start of the cleaned text (resolved through `letters`), else a unique
/// option phrase anywhere. Ambiguity or no match returns nullopt.
std::optional<GuidanceLabel> parse_prediction(const std::string& raw, const LetterMap& letters);

enum class Round1Outcome { Unchanged, None, Reframe, Unparseable };
Round1Outcome parse_round1(const std::string& raw);
std::optional<Direction> parse_round2(const std::string& raw);

/// Renders the single-round prompt for a question under a letter map.
std::string build_single_round_prompt(const PromptProtocol& protocol, const std::string& question,
                                      const LetterMap& letters);

/// Queries the oracle over a labeled benchmark under the protocol, parses
/// predictions, excludes unparseable/failed queries, and aggregates metrics.
/// Throws TransportError when more than half of the queries fail in transport.
EvalReport run_benchmark(const DatasetManifest& bench, const PromptProtocol& protocol,
                         Oracle& oracle, const EvalOptions& opts = {});

/// Aggregation step, exposed for tests: one (true label, prediction) row per
/// sample, nullopt meaning excluded.
EvalReport report_from_predictions(
    const std::vector<std::pair<GuidanceLabel, std::optional<GuidanceLabel>>>& rows,
    std::size_t failed_count = 0);

struct ReportPaths {
    std::filesystem::path metrics_json;
    std::filesystem::path confusion_csv;
    std::filesystem::path confusion_svg;
};

/// Writes metrics.json, confusion.csv (header labels Left,Right,Up,Down,O,X)
/// and a self-contained confusion.svg heatmap.
ReportPaths write_report(const EvalReport& report, const std::filesystem::path& out_dir,
                         const nlohmann::json& config_echo);

nlohmann::json metrics_to_json(const EvalReport& report, const nlohmann::json& config_echo);
std::string confusion_to_csv(const EvalReport& report);
std::string confusion_to_svg(const EvalReport& report);

}  // namespace dirguide
