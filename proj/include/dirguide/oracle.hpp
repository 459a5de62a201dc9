#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace dirguide {

/// One free-text query against a vision-language oracle.
struct OracleRequest {
    std::string tag;  // pipeline id for this query; keys transcripts and scripted tables
    std::filesystem::path image_ref;  // empty for text-only queries
    std::string prompt;
    int max_tokens = 128;
    double temperature = 0.0;
};

/// Deterministic stand-ins for the model, used by tests and dry runs.
struct ScriptedOracleSpec {
    enum class Mode { VisibleFraction, AnswerTable, FixedLetter };

    Mode mode = Mode::AnswerTable;

    // VisibleFraction: answers correctly (via `table`, keyed by unperturbed
    // sample id) while the bbox stays at least min_visible along the cut
    // axis, otherwise returns the sentinel. The fraction is derived from the
    // "{id}_{dir}_{tenths}" naming contract of perturbed files.
    double min_visible = 0.5;
    std::string sentinel = "UNKNOWN";

    // AnswerTable: response per request tag (falls back to the tag with a
    // "#round" suffix stripped, then to the image file stem).
    std::map<std::string, std::string> table;

    // FixedLetter: always the same single letter.
    char letter = 'A';
};

struct OracleConfig {
    enum class Kind { Http, Scripted };

    Kind kind = Kind::Scripted;
    std::string endpoint_url;  // Http: full URL of the chat-completions endpoint
    std::string model_name;
    std::string api_key_env = "ORACLE_API_KEY";  // empty string: no credential sent
    int max_concurrency = 4;
    int max_retries = 3;
    std::chrono::milliseconds timeout{30000};
    ScriptedOracleSpec scripted;

    bool valid() const {
        return kind == Kind::Scripted || (!endpoint_url.empty() && !model_name.empty());
    }
};

/// Append-only JSONL log of request/response pairs; safe to share across the
/// batch workers. Replaying a log through an AnswerTable oracle reproduces
/// the run.
class TranscriptLog {
public:
    explicit TranscriptLog(const std::filesystem::path& path);
    void record(const OracleRequest& req, const std::string& response, bool ok,
                const std::string& error, double latency_ms);
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
    std::mutex mu_;
};

/// tag -> response table from a transcript, for deterministic replay.
std::map<std::string, std::string> load_transcript_table(const std::filesystem::path& path);

class Oracle {
public:
    virtual ~Oracle() = default;
    /// Blocking single query. Throws TransportError, AuthMissing, OracleRefusal.
    virtual std::string answer(const OracleRequest& req) = 0;
};

std::unique_ptr<Oracle> make_oracle(const OracleConfig& cfg);

/// One-shot convenience over make_oracle.
std::string answer(const OracleRequest& req, const OracleConfig& cfg);

struct BatchResult {
    std::string text;
    std::string error;  // non-empty iff the request failed
    bool ok = false;
};

/// Runs requests with at most max_concurrency in flight; results stay
/// positionally aligned with the inputs and per-request failures are
/// captured, never propagated.
std::vector<BatchResult> answer_batch(Oracle& oracle, const std::vector<OracleRequest>& reqs,
                                      int max_concurrency, TranscriptLog* log = nullptr);

std::vector<BatchResult> answer_batch(const std::vector<OracleRequest>& reqs,
                                      const OracleConfig& cfg, TranscriptLog* log = nullptr);

/// FNV-1a hash of the request's identity fields, hex-encoded; recorded in
/// transcripts.
std::string request_hash(const OracleRequest& req);

/// Visible bbox fraction encoded by a perturbed-image id/stem:
/// "{base}_{dir}_{tenths}" -> 1 - tenths/10, anything else -> 1.0.
/// Returns the base id through base_out when non-null.
double visible_fraction_from_name(const std::string& stem, std::string* base_out = nullptr);

}  // namespace dirguide
