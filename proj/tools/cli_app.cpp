#include "cli_app.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "dirguide/errors.hpp"
#include "dirguide/eval.hpp"
#include "dirguide/genset.hpp"
#include "dirguide/image.hpp"
#include "dirguide/ingest.hpp"
#include "dirguide/oracle.hpp"
#include "dirguide/perturb.hpp"
#include "dirguide/scoring.hpp"

namespace dirguide::cli {

namespace {

struct OracleFlags {
    std::string spec;
    std::string model;
    std::string api_key_env = "ORACLE_API_KEY";
    int max_concurrency = 4;
    int max_retries = 3;
    long timeout_ms = 30000;
};

void add_oracle_flags(CLI::App* sub, OracleFlags& f, bool required) {
    auto* opt = sub->add_option("--oracle", f.spec,
                                "oracle spec: http:<url>, scripted:visfrac=<frac>, "
                                "scripted:table=<file.json>, scripted:letter=<A-F>");
    if (required) opt->required();
    sub->add_option("--model", f.model, "model name sent to an http oracle");
    sub->add_option("--api-key-env", f.api_key_env,
                    "env var holding the API key; empty sends no credential");
    sub->add_option("--max-concurrency", f.max_concurrency, "max in-flight oracle requests")
        ->check(CLI::PositiveNumber);
    sub->add_option("--max-retries", f.max_retries, "retries per request on transient failures")
        ->check(CLI::NonNegativeNumber);
    sub->add_option("--timeout-ms", f.timeout_ms, "per-request timeout")->check(CLI::PositiveNumber);
}

OracleConfig build_oracle_config(const OracleFlags& f) {
    OracleConfig cfg;
    cfg.model_name = f.model;
    cfg.api_key_env = f.api_key_env;
    cfg.max_concurrency = f.max_concurrency;
    cfg.max_retries = f.max_retries;
    cfg.timeout = std::chrono::milliseconds(f.timeout_ms);

    const std::string& spec = f.spec;
    if (spec.rfind("scripted:", 0) == 0) {
        cfg.kind = OracleConfig::Kind::Scripted;
        cfg.api_key_env.clear();
        const std::string body = spec.substr(9);
        if (body.rfind("visfrac=", 0) == 0) {
            cfg.scripted.mode = ScriptedOracleSpec::Mode::VisibleFraction;
            cfg.scripted.min_visible = std::stod(body.substr(8));
            if (cfg.scripted.min_visible < 0.0 || cfg.scripted.min_visible > 1.0)
                throw InvalidArgument("visfrac must be in [0,1]");
        } else if (body.rfind("table=", 0) == 0) {
            cfg.scripted.mode = ScriptedOracleSpec::Mode::AnswerTable;
            const std::string file = body.substr(6);
            if (file.size() > 6 && file.substr(file.size() - 6) == ".jsonl") {
                // a run transcript replays directly
                cfg.scripted.table = load_transcript_table(file);
            } else {
                std::ifstream in(file);
                if (!in) throw InvalidArgument("cannot open answer table: " + file);
                nlohmann::json doc;
                try {
                    doc = nlohmann::json::parse(in);
                } catch (const nlohmann::json::parse_error& e) {
                    throw InvalidArgument("bad answer table " + file + ": " + e.what());
                }
                for (const auto& [key, value] : doc.items())
                    cfg.scripted.table[key] = value.get<std::string>();
            }
        } else if (body.rfind("letter=", 0) == 0 && body.size() == 8) {
            cfg.scripted.mode = ScriptedOracleSpec::Mode::FixedLetter;
            cfg.scripted.letter = body[7];
        } else {
            throw InvalidArgument("unrecognized scripted oracle spec: " + spec);
        }
        return cfg;
    }
    if (spec.rfind("http:", 0) == 0 || spec.rfind("https://", 0) == 0) {
        cfg.kind = OracleConfig::Kind::Http;
        std::string url = spec.rfind("https://", 0) == 0 ? spec : spec.substr(5);
        if (url.rfind("//", 0) == 0) url = "http:" + url;  // --oracle http://host/path
        if (url.find("://") == std::string::npos) url = "http://" + url;
        cfg.endpoint_url = url;
        if (cfg.model_name.empty())
            throw InvalidArgument("http oracle requires --model");
        return cfg;
    }
    throw InvalidArgument("unrecognized oracle spec: " + spec);
}

/// VisibleFraction oracles answer "correctly" with the sample's first
/// ground-truth answer, keyed by unperturbed id.
void wire_visfrac_answers(OracleConfig& cfg, const DatasetManifest& manifest) {
    if (cfg.kind != OracleConfig::Kind::Scripted ||
        cfg.scripted.mode != ScriptedOracleSpec::Mode::VisibleFraction ||
        !cfg.scripted.table.empty())
        return;
    for (const auto& s : manifest.samples) {
        if (!s.answers.empty()) cfg.scripted.table[s.id] = s.answers.front();
    }
}

const char* oracle_kind_name(const OracleConfig& cfg) {
    if (cfg.kind == OracleConfig::Kind::Http) return "http";
    switch (cfg.scripted.mode) {
        case ScriptedOracleSpec::Mode::VisibleFraction: return "scripted:visfrac";
        case ScriptedOracleSpec::Mode::AnswerTable: return "scripted:table";
        case ScriptedOracleSpec::Mode::FixedLetter: return "scripted:letter";
    }
    return "scripted";
}

int parse_tenths(double ratio, const char* what) {
    const double scaled = ratio * 10.0;
    const int tenths = static_cast<int>(std::lround(scaled));
    if (std::abs(scaled - tenths) > 1e-6 || tenths < 1 || tenths > 9)
        throw InvalidArgument(std::string(what) + " must be one of 0.1 .. 0.9");
    return tenths;
}

struct GenerateArgs {
    std::string manifest;
    std::string out;
    std::string range = "0.1:0.9";
    double step = 0.1;
    double threshold_e = 0.5;
    std::uint64_t seed = 0;
    bool shuffle_letters = true;
    bool balance_opt = true;
    std::int64_t mismatch = -1;
    bool llm_rephrase = false;
    bool dedup = false;
    OracleFlags oracle;
};

int cmd_generate(const GenerateArgs& a) {
    const auto colon = a.range.find(':');
    if (colon == std::string::npos)
        throw InvalidArgument("--range must look like lo:hi, e.g. 0.1:0.9");
    const double lo = std::stod(a.range.substr(0, colon));
    const double hi = std::stod(a.range.substr(colon + 1));
    if (lo > hi) throw InvalidArgument("--range lo must not exceed hi");

    GenConfig cfg;
    cfg.perturb_lo_tenths = parse_tenths(lo, "range lo");
    cfg.perturb_hi_tenths = parse_tenths(hi, "range hi");
    cfg.perturb_step_tenths = parse_tenths(a.step, "step");
    cfg.scoring.threshold_e = a.threshold_e;
    cfg.shuffle_letters = a.shuffle_letters;
    cfg.balance = a.balance_opt;
    cfg.mismatch_count = a.mismatch;
    cfg.dedup_by_label_run = a.dedup;
    cfg.seed = a.seed;
    cfg.out_dir = a.out;
    if (cfg.scoring.threshold_e < 0.0 || cfg.scoring.threshold_e > 1.0)
        throw InvalidArgument("--threshold-e must be in [0,1]");

    const DatasetManifest manifest = load_manifest(a.manifest);
    OracleConfig oracle_cfg = build_oracle_config(a.oracle);
    wire_visfrac_answers(oracle_cfg, manifest);

    std::error_code ec;
    std::filesystem::create_directories(cfg.out_dir / "images", ec);
    if (!std::filesystem::is_directory(cfg.out_dir))
        throw WriteError("cannot create output directory: " + cfg.out_dir.string());

    TranscriptLog log(cfg.out_dir / "transcript.jsonl");
    auto oracle = make_oracle(oracle_cfg);

    GenStats stats;
    const auto answerable = filter_answerable(manifest, *oracle, cfg.scoring,
                                              oracle_cfg.max_concurrency, stats, &log);
    auto samples = generate_guidance(manifest, answerable, cfg, *oracle,
                                     oracle_cfg.max_concurrency, stats, &log);
    if (cfg.dedup_by_label_run) samples = dedup_by_label_run(std::move(samples), &stats.dedup_dropped);

    const auto counts = class_counts(samples);
    const std::size_t m = directional_mean(counts);
    const std::size_t n_mismatch =
        cfg.mismatch_count >= 0 ? static_cast<std::size_t>(cfg.mismatch_count) : m;
    if (n_mismatch > 0) {
        auto mismatched = make_mismatch_samples(manifest, n_mismatch, cfg.seed,
                                                a.llm_rephrase ? oracle.get() : nullptr, &log);
        samples.insert(samples.end(), std::make_move_iterator(mismatched.begin()),
                       std::make_move_iterator(mismatched.end()));
    }

    if (cfg.balance) {
        samples = balance(std::move(samples), cfg.seed);
    } else {
        std::sort(samples.begin(), samples.end(),
                  [](const GuidanceSample& x, const GuidanceSample& y) { return x.id < y.id; });
    }
    samples = assign_letters(std::move(samples), cfg.shuffle_letters, cfg.seed);

    // Mismatch rows reference pool images; copy them under images/ so the
    // corpus directory is self-contained.
    for (auto& s : samples) {
        if (s.provenance.kind != Provenance::Kind::Mismatch) continue;
        const std::filesystem::path src = s.image;
        const std::string name =
            "src_" + *s.provenance.image_source_id + src.extension().string();
        const std::filesystem::path dst = cfg.out_dir / "images" / name;
        if (!std::filesystem::exists(dst)) {
            std::error_code copy_ec;
            std::filesystem::copy_file(src, dst, copy_ec);
            if (copy_ec) throw WriteError("cannot copy " + src.string() + ": " + copy_ec.message());
        }
        s.image = "images/" + name;
    }

    const std::size_t written = emit_corpus(samples, cfg.out_dir / "corpus.jsonl");
    const auto report = make_run_report(cfg, stats, class_counts(samples),
                                        oracle_kind_name(oracle_cfg), "transcript.jsonl");
    {
        std::ofstream out(cfg.out_dir / "report.json", std::ios::binary | std::ios::trunc);
        if (!out) throw WriteError("cannot write report.json");
        out << report.dump(2) << "\n";
    }
    std::cout << "wrote " << written << " samples to " << (cfg.out_dir / "corpus.jsonl").string()
              << " (answerable " << stats.answerable << "/" << stats.pool_size << ", grid "
              << stats.grid_size << ")\n";
    return kExitOk;
}

struct EvaluateArgs {
    std::string benchmark;
    std::string protocol = "single-round";
    std::string out;
    std::string template_dir;
    std::int64_t shuffle_seed = -1;
    OracleFlags oracle;
};

int cmd_evaluate(const EvaluateArgs& a) {
    const auto mode = PromptProtocol::parse_mode(a.protocol);
    if (!mode) throw InvalidArgument("unknown protocol \"" + a.protocol + "\"");
    if (!a.template_dir.empty() && !std::filesystem::is_directory(a.template_dir))
        throw InvalidArgument("--template-dir is not a directory: " + a.template_dir);
    const PromptProtocol protocol = a.template_dir.empty()
                                        ? PromptProtocol::defaults(*mode)
                                        : PromptProtocol::from_dir(*mode, a.template_dir);

    const DatasetManifest bench = load_manifest(a.benchmark);
    OracleConfig oracle_cfg = build_oracle_config(a.oracle);
    wire_visfrac_answers(oracle_cfg, bench);

    std::error_code ec;
    std::filesystem::create_directories(a.out, ec);
    TranscriptLog log(std::filesystem::path(a.out) / "transcript.jsonl");
    auto oracle = make_oracle(oracle_cfg);

    EvalOptions opts;
    opts.max_concurrency = oracle_cfg.max_concurrency;
    opts.log = &log;
    if (a.shuffle_seed >= 0) opts.shuffle_seed = static_cast<std::uint64_t>(a.shuffle_seed);

    const EvalReport report = run_benchmark(bench, protocol, *oracle, opts);

    nlohmann::ordered_json echo{{"benchmark", a.benchmark},
                                {"protocol", PromptProtocol::mode_name(*mode)},
                                {"oracle_kind", oracle_kind_name(oracle_cfg)},
                                {"model", oracle_cfg.model_name},
                                {"shuffle_seed", a.shuffle_seed},
                                {"f1_averaging", "macro"},
                                {"stopword_list", stopword_version()}};
    write_report(report, a.out, echo);
    std::printf("accuracy %.4f  macro_f1 %.4f  acc_f %.4f  excluded %zu/%zu\n", report.accuracy,
                report.macro_f1, report.acc_f, report.excluded, report.total);
    return kExitOk;
}

struct PerturbArgs {
    std::string image;
    std::string bbox;
    std::string direction;
    double ratio = 0.5;
    std::string out = ".";
    std::string id;
};

int cmd_perturb(const PerturbArgs& a) {
    BBox box;
    if (std::sscanf(a.bbox.c_str(), "%d,%d,%d,%d", &box.x, &box.y, &box.w, &box.h) != 4)
        throw InvalidArgument("--bbox must look like x,y,w,h");
    const auto dir = parse_direction(a.direction);
    if (!dir) throw InvalidArgument("unknown direction \"" + a.direction + "\"");
    PerturbationSpec spec{*dir, parse_tenths(a.ratio, "ratio")};

    const ImageSize size = read_image_size(a.image);
    if (!box.valid_for(size.width, size.height))
        throw InvalidArgument("bbox does not fit inside the image");
    const CropRect rect = compute_crop(size.width, size.height, box, spec);

    const std::string out_id = a.id.empty() ? std::filesystem::path(a.image).stem().string() : a.id;
    apply_crop(a.image, rect, spec, a.out, out_id);
    std::printf("%d,%d,%d,%d\n", rect.x, rect.y, rect.w, rect.h);
    return kExitOk;
}

struct StatsArgs {
    std::string manifest;
    std::string corpus;
    bool json = false;
    bool dump_stopwords = false;
};

void print_counts(const std::map<GuidanceLabel, std::size_t>& counts, std::size_t unlabeled,
                  bool as_json) {
    std::size_t total = unlabeled;
    std::size_t directional = 0;
    for (const auto& [label, count] : counts) {
        total += count;
        if (direction_of(label)) directional += count;
    }
    if (as_json) {
        nlohmann::ordered_json j;
        for (GuidanceLabel g : kAllLabels) j["counts"][canonical_name(g)] = counts.at(g);
        if (unlabeled > 0) j["counts"]["unlabeled"] = unlabeled;
        j["total"] = total;
        j["directional_total"] = directional;
        for (GuidanceLabel g :
             {GuidanceLabel::Left, GuidanceLabel::Right, GuidanceLabel::Up, GuidanceLabel::Down}) {
            j["directional_shares"][canonical_name(g)] =
                directional > 0 ? static_cast<double>(counts.at(g)) / directional : 0.0;
        }
        std::cout << j.dump(2) << "\n";
        return;
    }
    std::printf("%-12s %8s %8s %14s\n", "label", "count", "share", "dir. share");
    for (GuidanceLabel g : kAllLabels) {
        const std::size_t c = counts.at(g);
        const double share = total > 0 ? 100.0 * c / total : 0.0;
        if (direction_of(g)) {
            const double dshare = directional > 0 ? 100.0 * c / directional : 0.0;
            std::printf("%-12s %8zu %7.1f%% %13.1f%%\n", canonical_name(g), c, share, dshare);
        } else {
            std::printf("%-12s %8zu %7.1f%% %14s\n", canonical_name(g), c, share, "-");
        }
    }
    if (unlabeled > 0) std::printf("%-12s %8zu\n", "unlabeled", unlabeled);
    std::printf("%-12s %8zu\n", "total", total);
}

std::map<GuidanceLabel, std::size_t> corpus_counts(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw MalformedManifest("cannot open corpus: " + path.string());
    std::map<GuidanceLabel, std::size_t> counts;
    for (GuidanceLabel g : kAllLabels) counts[g] = 0;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        nlohmann::json rec;
        try {
            rec = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw MalformedManifest("corpus line " + std::to_string(line_no) + ": " + e.what());
        }
        const auto& conv = rec.at("conversations");
        const std::string human = conv.at(0).at("value").get<std::string>();
        const std::string letter = conv.at(1).at("value").get<std::string>();
        if (letter.size() != 1 || letter[0] < 'A' || letter[0] > 'F')
            throw MalformedManifest("corpus line " + std::to_string(line_no) +
                                    ": gpt value is not a letter");
        // recover the letter's label from the option line "X.{display}."
        bool found = false;
        for (GuidanceLabel g : kAllLabels) {
            const std::string pattern =
                std::string(1, letter[0]) + "." + display_name(g) + ".";
            if (human.find(pattern) != std::string::npos) {
                ++counts[g];
                found = true;
                break;
            }
        }
        if (!found)
            throw MalformedManifest("corpus line " + std::to_string(line_no) +
                                    ": cannot resolve option letter " + letter);
    }
    return counts;
}

int cmd_stats(const StatsArgs& a) {
    if (a.dump_stopwords) {
        for (const auto& w : stopword_list()) std::cout << w << "\n";
        std::cout << "# " << stopword_version() << ", " << stopword_list().size() << " entries\n";
        return kExitOk;
    }
    if (!a.manifest.empty()) {
        const DatasetManifest m = load_manifest(a.manifest);
        std::map<GuidanceLabel, std::size_t> counts;
        for (GuidanceLabel g : kAllLabels) counts[g] = 0;
        std::size_t unlabeled = 0;
        for (const auto& s : m.samples) {
            if (s.label) {
                ++counts[*s.label];
            } else {
                ++unlabeled;
            }
        }
        print_counts(counts, unlabeled, a.json);
        return kExitOk;
    }
    if (!a.corpus.empty()) {
        print_counts(corpus_counts(a.corpus), 0, a.json);
        return kExitOk;
    }
    throw InvalidArgument("stats needs --manifest, --corpus, or --dump-stopwords");
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
    CLI::App app{"Directional-guidance corpus generator and benchmark harness"};
    app.require_subcommand(0, 1);
    app.set_config("--config", "",
                   "key=value file mirroring the flags; use a [generate] or [evaluate] "
                   "section (or dotted keys); command-line flags win");

    GenerateArgs gen;
    auto* generate = app.add_subcommand(
        "generate", "synthesize a guidance-labeled instruction-tuning corpus");
    generate->fallthrough(true);
    generate->add_option("--manifest", gen.manifest, "dataset manifest JSON")->required();
    generate->add_option("--out", gen.out, "output directory")->required();
    generate->add_option("--range", gen.range, "perturbation ratio range lo:hi")
        ->capture_default_str();
    generate->add_option("--step", gen.step, "ratio step")->capture_default_str();
    generate->add_option("--threshold-e", gen.threshold_e, "precision threshold e")
        ->capture_default_str();
    generate->add_option("--seed", gen.seed, "run seed")->capture_default_str();
    generate->add_flag("--shuffle-letters,!--no-shuffle-letters", gen.shuffle_letters,
                       "shuffle letter-option association per sample");
    generate->add_flag("--balance,!--no-balance", gen.balance_opt,
                       "under-sample negatives toward the directional mean");
    generate->add_option("--mismatch", gen.mismatch,
                         "mismatch sample count; -1 matches the directional mean");
    generate->add_flag("--llm-rephrase", gen.llm_rephrase,
                       "rephrase mismatch questions through the oracle instead of the template");
    generate->add_flag("--dedup-by-label-run", gen.dedup,
                       "keep only the first ratio of each identical-label run");
    add_oracle_flags(generate, gen.oracle, true);

    EvaluateArgs ev;
    auto* evaluate =
        app.add_subcommand("evaluate", "run an oracle over a labeled benchmark and report metrics");
    evaluate->fallthrough(true);
    evaluate->add_option("--benchmark", ev.benchmark, "labeled benchmark manifest")->required();
    evaluate->add_option("--protocol", ev.protocol, "single-round or two-round")
        ->capture_default_str();
    evaluate->add_option("--out", ev.out, "output directory")->required();
    evaluate->add_option("--template-dir", ev.template_dir,
                         "directory with prompt template overrides");
    evaluate->add_option("--shuffle-seed", ev.shuffle_seed,
                         "seed for per-query letter shuffling; negative leaves options fixed");
    add_oracle_flags(evaluate, ev.oracle, true);

    PerturbArgs pt;
    auto* perturb = app.add_subcommand("perturb", "crop one image and print the retained rect");
    perturb->fallthrough(true);
    perturb->add_option("--image", pt.image, "source image")->required();
    perturb->add_option("--bbox", pt.bbox, "target bbox x,y,w,h")->required();
    perturb->add_option("--direction", pt.direction, "left|right|up|down")->required();
    perturb->add_option("--ratio", pt.ratio, "crop ratio in 0.1..0.9")->required();
    perturb->add_option("--out", pt.out, "output directory")->capture_default_str();
    perturb->add_option("--id", pt.id, "output id; defaults to the image stem");

    StatsArgs st;
    auto* stats = app.add_subcommand("stats", "class counts and shares for a manifest or corpus");
    stats->fallthrough(true);
    stats->add_option("--manifest", st.manifest, "manifest JSON to summarize");
    stats->add_option("--corpus", st.corpus, "corpus JSONL to summarize");
    stats->add_flag("--json", st.json, "machine-readable output");
    stats->add_flag("--dump-stopwords", st.dump_stopwords, "print the embedded stopword list");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitConfig;
    }

    try {
        if (generate->parsed()) return cmd_generate(gen);
        if (evaluate->parsed()) return cmd_evaluate(ev);
        if (perturb->parsed()) return cmd_perturb(pt);
        if (stats->parsed()) return cmd_stats(st);
        std::cerr << app.help() << std::endl;
        return kExitConfig;
    } catch (const TransportError& e) {
        std::cerr << "oracle error: " << e.what() << std::endl;
        return kExitOracle;
    } catch (const AuthMissing& e) {
        std::cerr << "oracle error: " << e.what() << std::endl;
        return kExitOracle;
    } catch (const WriteError& e) {
        std::cerr << "write error: " << e.what() << std::endl;
        return kExitWrite;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << std::endl;
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << std::endl;
        return kExitConfig;
    }
}

}  // namespace dirguide::cli
