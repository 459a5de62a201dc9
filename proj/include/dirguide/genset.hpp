#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "dirguide/ingest.hpp"
#include "dirguide/oracle.hpp"
#include "dirguide/scoring.hpp"
#include "dirguide/types.hpp"

namespace dirguide {

struct GenConfig {
    int perturb_lo_tenths = 1;
    int perturb_hi_tenths = 9;
    int perturb_step_tenths = 1;
    ScoringConfig scoring;
    bool shuffle_letters = true;
    bool balance = true;
    std::int64_t mismatch_count = -1;  // -1: match the directional mean after balancing
    bool dedup_by_label_run = false;
    std::uint64_t seed = 0;
    std::filesystem::path out_dir;
};

/// A question paired with a foreign image to synthesize a None sample.
struct MismatchPair {
    std::string question_source_id;
    std::string image_source_id;
    std::string rephrased_question;
};

/// Per-run accounting emitted in the run report.
struct GenStats {
    std::size_t pool_size = 0;
    std::size_t answerable = 0;
    std::size_t grid_size = 0;
    std::size_t filter_oracle_errors = 0;
    std::size_t crop_exclusions = 0;
    std::size_t oracle_exclusions = 0;
    std::size_t dedup_dropped = 0;
};

/// Samples whose unperturbed image the oracle answers correctly, order
/// preserved. Oracle failures are excluded and counted in stats.
std::vector<VqaSample> filter_answerable(const DatasetManifest& pool, Oracle& oracle,
                                         const ScoringConfig& scoring, int max_concurrency,
                                         GenStats& stats, TranscriptLog* log = nullptr);

/// Core generation sweep: every answerable sample crossed with the
/// perturbation grid. Crops are written under cfg.out_dir/images; the oracle
/// is re-queried on each crop; a still-correct answer labels the pair
/// Unchanged, anything else labels it with the perturbation's direction.
std::vector<GuidanceSample> generate_guidance(const DatasetManifest& pool,
                                              const std::vector<VqaSample>& answerable,
                                              const GenConfig& cfg, Oracle& oracle,
                                              int max_concurrency, GenStats& stats,
                                              TranscriptLog* log = nullptr);

/// Rewrites a generic question around the answer's noun. With no oracle the
/// deterministic template "What is the color of this {answer}?" is used; an
/// oracle refusal falls back to the template when allowed. `tag` keys the
/// oracle request for transcripts and scripted tables.
std::string rephrase_question(const std::string& question, const std::string& answer,
                              Oracle* oracle = nullptr, bool fallback_to_template = true,
                              const std::string& tag = {}, TranscriptLog* log = nullptr);

/// n (question, image) pairings with image id != question id, drawn by
/// rotating a seeded permutation of the pool, questions already rephrased.
std::vector<MismatchPair> draw_mismatch_pairs(const DatasetManifest& pool, std::size_t n,
                                              std::uint64_t seed, Oracle* oracle = nullptr,
                                              TranscriptLog* log = nullptr);

/// Materializes draw_mismatch_pairs as None-labeled samples on intact images.
std::vector<GuidanceSample> make_mismatch_samples(const DatasetManifest& pool, std::size_t n,
                                                  std::uint64_t seed, Oracle* oracle = nullptr,
                                                  TranscriptLog* log = nullptr);

/// Under-samples Unchanged and None toward m = round(mean of the four
/// directional counts); directional classes untouched; output sorted by id.
std::vector<GuidanceSample> balance(std::vector<GuidanceSample> samples, std::uint64_t seed);

/// Count per label, keyed canonically.
std::map<GuidanceLabel, std::size_t> class_counts(const std::vector<GuidanceSample>& samples);

/// Directional-mean target used by balance and the auto mismatch count.
std::size_t directional_mean(const std::map<GuidanceLabel, std::size_t>& counts);

/// Fixed template map, or an independent seeded permutation per sample.
std::vector<GuidanceSample> assign_letters(std::vector<GuidanceSample> samples, bool shuffle,
                                           std::uint64_t seed);

/// Keeps only the first sample of each run of identical labels over
/// ascending ratios within one (source, direction) sweep.
std::vector<GuidanceSample> dedup_by_label_run(std::vector<GuidanceSample> samples,
                                               std::size_t* dropped = nullptr);

/// Instruction-tuning JSONL. One record per sample:
/// {"id", "image", "conversations": [human turn with the six lettered
/// options, gpt turn with the bare letter]}. Returns the record count;
/// byte-stable for identical input.
std::size_t emit_corpus(const std::vector<GuidanceSample>& samples,
                        const std::filesystem::path& out_path);

/// The human-turn text emitted for a sample.
std::string corpus_prompt(const GuidanceSample& s);

/// Run report JSON: class counts, exclusions, config echo, stopword list
/// version, transcript path. Contains nothing time-dependent.
nlohmann::json make_run_report(const GenConfig& cfg, const GenStats& stats,
                               const std::map<GuidanceLabel, std::size_t>& final_counts,
                               const std::string& oracle_kind,
                               const std::string& transcript_file);

}  // namespace dirguide
