#include "dirguide/genset.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "dirguide/errors.hpp"
#include "dirguide/image.hpp"
#include "dirguide/perturb.hpp"
#include "dirguide/rng.hpp"

namespace dirguide {

namespace {

// substream ids so the seeded stages cannot interfere with one another
constexpr std::uint64_t kStreamMismatch = 1;
constexpr std::uint64_t kStreamBalance = 2;
constexpr std::uint64_t kStreamLetters = 3;

std::string vqa_prompt(const std::string& question) {
    return question + "\nAnswer the question using a single word or short phrase.";
}

}  // namespace

std::vector<VqaSample> filter_answerable(const DatasetManifest& pool, Oracle& oracle,
                                         const ScoringConfig& scoring, int max_concurrency,
                                         GenStats& stats, TranscriptLog* log) {
    stats.pool_size = pool.size();
    std::vector<OracleRequest> reqs;
    reqs.reserve(pool.size());
    for (const auto& s : pool.samples) {
        if (!s.bbox) throw InvalidArgument("filter_answerable: sample \"" + s.id + "\" has no bbox");
        if (s.answers.empty())
            throw InvalidArgument("filter_answerable: sample \"" + s.id + "\" has no answers");
        reqs.push_back(OracleRequest{s.id, pool.resolve(s), vqa_prompt(s.question)});
    }

    const auto results = answer_batch(oracle, reqs, max_concurrency, log);
    std::vector<VqaSample> answerable;
    for (std::size_t i = 0; i < pool.samples.size(); ++i) {
        if (!results[i].ok) {
            ++stats.filter_oracle_errors;
            continue;
        }
        if (is_correct(results[i].text, pool.samples[i].answers, scoring))
            answerable.push_back(pool.samples[i]);
    }
    stats.answerable = answerable.size();
    return answerable;
}

std::vector<GuidanceSample> generate_guidance(const DatasetManifest& pool,
                                              const std::vector<VqaSample>& answerable,
                                              const GenConfig& cfg, Oracle& oracle,
                                              int max_concurrency, GenStats& stats,
                                              TranscriptLog* log) {
    const auto grid = perturbation_grid_tenths(cfg.perturb_lo_tenths, cfg.perturb_hi_tenths,
                                               cfg.perturb_step_tenths);
    stats.grid_size = grid.size();
    const std::filesystem::path images_dir = cfg.out_dir / "images";
    std::error_code ec;
    std::filesystem::create_directories(images_dir, ec);

    struct Pending {
        const VqaSample* sample;
        PerturbationSpec spec;
        std::string file_name;
    };
    std::vector<Pending> pending;
    std::vector<OracleRequest> reqs;

    for (const auto& sample : answerable) {
        if (!sample.bbox)
            throw InvalidArgument("generate_guidance: sample \"" + sample.id + "\" has no bbox");
        const std::filesystem::path src = pool.resolve(sample);
        ImageSize size;
        try {
            size = read_image_size(src);
        } catch (const DecodeError&) {
            stats.crop_exclusions += grid.size();
            continue;
        }
        for (const auto& spec : grid) {
            CropRect rect;
            try {
                rect = compute_crop(size.width, size.height, *sample.bbox, spec);
            } catch (const EmptyCrop&) {
                ++stats.crop_exclusions;
                continue;
            }
            std::filesystem::path out;
            try {
                out = apply_crop(src, rect, spec, images_dir, sample.id);
            } catch (const DecodeError&) {
                ++stats.crop_exclusions;
                continue;
            }
            // WriteError propagates: an unwritable out_dir aborts the run.
            pending.push_back(Pending{&sample, spec, out.filename().string()});
            reqs.push_back(
                OracleRequest{out.stem().string(), out, vqa_prompt(sample.question)});
        }
    }

    const auto results = answer_batch(oracle, reqs, max_concurrency, log);

    std::vector<GuidanceSample> out;
    out.reserve(pending.size());
    for (std::size_t i = 0; i < pending.size(); ++i) {
        if (!results[i].ok) {
            ++stats.oracle_exclusions;
            continue;
        }
        const auto& p = pending[i];
        GuidanceSample g;
        g.id = p.sample->id + "_" + canonical_name(p.spec.direction) + "_" +
               std::to_string(p.spec.ratio_tenths);
        g.image = "images/" + p.file_name;
        g.question = p.sample->question;
        g.label = is_correct(results[i].text, p.sample->answers, cfg.scoring)
                      ? GuidanceLabel::Unchanged
                      : label_of(p.spec.direction);
        g.provenance = Provenance{p.sample->id, Provenance::Kind::Perturbation, p.spec, {}};
        out.push_back(std::move(g));
    }
    return out;
}

std::string rephrase_question(const std::string& question, const std::string& answer,
                              Oracle* oracle, bool fallback_to_template, const std::string& tag,
                              TranscriptLog* log) {
    if (answer.empty()) throw InvalidArgument("rephrase_question: answer must be non-empty");
    if (oracle != nullptr) {
        OracleRequest req;
        req.tag = tag.empty() ? "rephrase:" + answer : tag;
        req.prompt = "The question \"" + question + "\" was answered with \"" + answer +
                     "\". Rewrite the question so it asks about a visual attribute of the " +
                     answer + ". Reply with the rewritten question only.";
        const auto t0 = std::chrono::steady_clock::now();
        auto elapsed_ms = [&] {
            return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() -
                                                             t0)
                .count();
        };
        try {
            const std::string text = oracle->answer(req);
            if (log) log->record(req, text, true, "", elapsed_ms());
            return text;
        } catch (const OracleRefusal& e) {
            if (log) log->record(req, "", false, std::string("refusal: ") + e.what(), elapsed_ms());
            if (!fallback_to_template) throw;
        }
    }
    return "What is the color of this " + answer + "?";
}

std::vector<MismatchPair> draw_mismatch_pairs(const DatasetManifest& pool, std::size_t n,
                                              std::uint64_t seed, Oracle* oracle,
                                              TranscriptLog* log) {
    if (n == 0) return {};
    const std::size_t size = pool.size();
    if (size < 2) throw InsufficientPool("mismatch augmentation needs at least 2 pool samples");

    std::vector<std::size_t> perm(size);
    for (std::size_t i = 0; i < size; ++i) perm[i] = i;
    Rng rng(mix_seed(seed, kStreamMismatch));
    shuffle(perm, rng);

    std::vector<MismatchPair> pairs;
    pairs.reserve(n);
    for (std::size_t k = 0; k < n; ++k) {
        const std::size_t pos = k % size;
        const std::size_t cycle = k / size;
        const std::size_t offset = 1 + cycle % (size - 1);
        const VqaSample& q = pool.samples[perm[pos]];
        const VqaSample& img = pool.samples[perm[(pos + offset) % size]];
        if (q.answers.empty())
            throw InvalidArgument("draw_mismatch_pairs: sample \"" + q.id + "\" has no answers");
        pairs.push_back(MismatchPair{q.id, img.id,
                                     rephrase_question(q.question, q.answers.front(), oracle,
                                                       true, "rephrase:" + q.id, log)});
    }
    return pairs;
}

std::vector<GuidanceSample> make_mismatch_samples(const DatasetManifest& pool, std::size_t n,
                                                  std::uint64_t seed, Oracle* oracle,
                                                  TranscriptLog* log) {
    std::map<std::string, const VqaSample*> by_id;
    for (const auto& s : pool.samples) by_id[s.id] = &s;

    std::vector<GuidanceSample> out;
    out.reserve(n);
    std::size_t k = 0;
    for (const auto& pair : draw_mismatch_pairs(pool, n, seed, oracle, log)) {
        char seq[24];
        std::snprintf(seq, sizeof(seq), "%06zu", k++);
        GuidanceSample g;
        g.id = std::string("mm_") + seq + "_" + pair.question_source_id + "_" +
               pair.image_source_id;
        g.image = pool.resolve(*by_id.at(pair.image_source_id)).string();
        g.question = pair.rephrased_question;
        g.label = GuidanceLabel::None;
        g.provenance =
            Provenance{pair.question_source_id, Provenance::Kind::Mismatch, {}, pair.image_source_id};
        out.push_back(std::move(g));
    }
    return out;
}

std::map<GuidanceLabel, std::size_t> class_counts(const std::vector<GuidanceSample>& samples) {
    std::map<GuidanceLabel, std::size_t> counts;
    for (GuidanceLabel g : kAllLabels) counts[g] = 0;
    for (const auto& s : samples) ++counts[s.label];
    return counts;
}

std::size_t directional_mean(const std::map<GuidanceLabel, std::size_t>& counts) {
    const double sum = static_cast<double>(counts.at(GuidanceLabel::Left)) +
                       static_cast<double>(counts.at(GuidanceLabel::Right)) +
                       static_cast<double>(counts.at(GuidanceLabel::Up)) +
                       static_cast<double>(counts.at(GuidanceLabel::Down));
    return static_cast<std::size_t>(std::llround(sum / 4.0));
}

namespace {

// keeps `target` of the `label` rows, drawn uniformly, order preserved
void under_sample(std::vector<GuidanceSample>& samples, GuidanceLabel label, std::size_t target,
                  Rng& rng) {
    std::vector<std::size_t> positions;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        if (samples[i].label == label) positions.push_back(i);
    }
    if (positions.size() <= target) return;
    const auto keep_rel = sample_indices(rng, positions.size(), target);
    std::vector<bool> keep(samples.size(), true);
    for (std::size_t p : positions) keep[p] = false;
    for (std::size_t r : keep_rel) keep[positions[r]] = true;
    std::vector<GuidanceSample> kept;
    kept.reserve(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) {
        if (keep[i]) kept.push_back(std::move(samples[i]));
    }
    samples = std::move(kept);
}

}  // namespace

std::vector<GuidanceSample> balance(std::vector<GuidanceSample> samples, std::uint64_t seed) {
    if (samples.empty()) return samples;
    const auto counts = class_counts(samples);
    const std::size_t m = directional_mean(counts);
    Rng rng(mix_seed(seed, kStreamBalance));
    under_sample(samples, GuidanceLabel::Unchanged, m, rng);
    under_sample(samples, GuidanceLabel::None, m, rng);
    std::sort(samples.begin(), samples.end(),
              [](const GuidanceSample& a, const GuidanceSample& b) { return a.id < b.id; });
    return samples;
}

std::vector<GuidanceSample> assign_letters(std::vector<GuidanceSample> samples, bool shuffle_opt,
                                           std::uint64_t seed) {
    if (!shuffle_opt) {
        for (auto& s : samples) s.letter_map = template_letter_map();
        return samples;
    }
    Rng rng(mix_seed(seed, kStreamLetters));
    for (auto& s : samples) {
        std::vector<GuidanceLabel> labels(kAllLabels.begin(), kAllLabels.end());
        shuffle(labels, rng);
        std::copy(labels.begin(), labels.end(), s.letter_map.begin());
    }
    return samples;
}

std::vector<GuidanceSample> dedup_by_label_run(std::vector<GuidanceSample> samples,
                                               std::size_t* dropped) {
    // Within one (source, direction) sweep, adjacent ratios often produce the
    // same label; keep the first of each run.
    struct Key {
        std::string source;
        Direction dir;
        bool operator<(const Key& o) const {
            return source != o.source ? source < o.source : dir < o.dir;
        }
    };
    std::map<Key, std::vector<std::size_t>> sweeps;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const auto& p = samples[i].provenance;
        if (p.kind != Provenance::Kind::Perturbation || !p.spec) continue;
        sweeps[Key{p.source_id, p.spec->direction}].push_back(i);
    }
    std::vector<bool> drop(samples.size(), false);
    for (auto& [key, idxs] : sweeps) {
        std::sort(idxs.begin(), idxs.end(), [&](std::size_t a, std::size_t b) {
            return samples[a].provenance.spec->ratio_tenths <
                   samples[b].provenance.spec->ratio_tenths;
        });
        for (std::size_t k = 1; k < idxs.size(); ++k) {
            if (samples[idxs[k]].label == samples[idxs[k - 1]].label) drop[idxs[k]] = true;
        }
    }
    std::vector<GuidanceSample> out;
    std::size_t n_dropped = 0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        if (drop[i]) {
            ++n_dropped;
        } else {
            out.push_back(std::move(samples[i]));
        }
    }
    if (dropped) *dropped = n_dropped;
    return out;
}

std::string corpus_prompt(const GuidanceSample& s) {
    std::string options;
    for (int i = 0; i < kNumLabels; ++i) {
        if (i > 0) options += ' ';
        options += static_cast<char>('A' + i);
        options += '.';
        options += display_name(s.letter_map[static_cast<std::size_t>(i)]);
        options += '.';
    }
    return "<image>\n" + s.question +
           " To improve the image and answer the question, how should the camera be moved? " +
           options;
}

std::size_t emit_corpus(const std::vector<GuidanceSample>& samples,
                        const std::filesystem::path& out_path) {
    std::ofstream out(out_path, std::ios::binary | std::ios::trunc);
    if (!out) throw WriteError("cannot write corpus: " + out_path.string());
    for (const auto& s : samples) {
        if (!is_bijection(s.letter_map))
            throw InvalidArgument("emit_corpus: sample \"" + s.id +
                                  "\" letter map is not a bijection");
        nlohmann::ordered_json rec{
            {"id", s.id},
            {"image", s.image},
            {"conversations",
             nlohmann::ordered_json::array(
                 {nlohmann::ordered_json{{"from", "human"}, {"value", corpus_prompt(s)}},
                  nlohmann::ordered_json{
                      {"from", "gpt"},
                      {"value", std::string(1, letter_for(s.letter_map, s.label))}}})}};
        out << rec.dump() << "\n";
    }
    out.flush();
    if (!out) throw WriteError("short write to " + out_path.string());
    return samples.size();
}

nlohmann::json make_run_report(const GenConfig& cfg, const GenStats& stats,
                               const std::map<GuidanceLabel, std::size_t>& final_counts,
                               const std::string& oracle_kind,
                               const std::string& transcript_file) {
    nlohmann::ordered_json counts;
    std::size_t total = 0;
    for (GuidanceLabel g : kAllLabels) {
        const std::size_t c = final_counts.count(g) ? final_counts.at(g) : 0;
        counts[canonical_name(g)] = c;
        total += c;
    }
    nlohmann::ordered_json report{
        {"class_counts", counts},
        {"total_samples", total},
        {"exclusions",
         {{"filter_oracle_errors", stats.filter_oracle_errors},
          {"crop", stats.crop_exclusions},
          {"oracle", stats.oracle_exclusions},
          {"dedup_dropped", stats.dedup_dropped}}},
        {"pool", {{"size", stats.pool_size}, {"answerable", stats.answerable}}},
        {"grid_size", stats.grid_size},
        {"config",
         {{"perturb_lo_tenths", cfg.perturb_lo_tenths},
          {"perturb_hi_tenths", cfg.perturb_hi_tenths},
          {"perturb_step_tenths", cfg.perturb_step_tenths},
          {"threshold_e", cfg.scoring.threshold_e},
          {"shuffle_letters", cfg.shuffle_letters},
          {"balance", cfg.balance},
          {"mismatch_count", cfg.mismatch_count},
          {"dedup_by_label_run", cfg.dedup_by_label_run},
          {"seed", cfg.seed},
          {"oracle_kind", oracle_kind}}},
        {"stopword_list", stopword_version()},
        {"transcript", transcript_file}};
    return report;
}

}  // namespace dirguide
