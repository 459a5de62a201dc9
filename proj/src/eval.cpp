#include "dirguide/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "dirguide/errors.hpp"
#include "dirguide/rng.hpp"
#include "text_util.hpp"

namespace dirguide {

namespace {

constexpr const char* kSingleRoundDefault =
    "{QUESTION} To improve the image and answer the question, how should the camera be moved? "
    "{OPTIONS} Reply with the letter of the chosen option.";

// Round 1 separates unchanged / none / move-camera; letters fixed A/B/C.
constexpr const char* kRound1Default =
    "{QUESTION}\n"
    "You are helping adjust the camera view so the question above can be answered from the "
    "image. Choose exactly one option:\n"
    "A. Leave it unchanged - the image already contains all the information needed to answer "
    "the question.\n"
    "B. None of the other options - the question cannot be answered from this scene even "
    "after moving the camera, or it is unrelated to the image.\n"
    "C. Move camera - the needed object or text is only partially visible and moving the "
    "camera in one direction would reveal it.\n"
    "Reply with the letter of the chosen option.";

// Round 2 asks only for the direction; letters fixed A/B/C/D = up/left/down/right.
constexpr const char* kRound2Default =
    "{QUESTION}\n"
    "In the previous setting, the result is framing: the image shows part of the needed "
    "information and the camera should be moved in one direction to answer the question. "
    "Previous assessment: {RESULT}\n"
    "Choose exactly one direction:\n"
    "A. Up - the view is truncated on top.\n"
    "B. Left - the view is truncated on the left.\n"
    "C. Down - the view is truncated on the bottom.\n"
    "D. Right - the view is truncated on the right.\n"
    "Reply with the letter of the chosen direction.";

constexpr std::array<Direction, 4> kRound2Letters = {Direction::Up, Direction::Left,
                                                     Direction::Down, Direction::Right};

std::string replace_all(std::string text, const std::string& from, const std::string& to) {
    std::size_t pos = 0;
    while ((pos = text.find(from, pos)) != std::string::npos) {
        text.replace(pos, from.size(), to);
        pos += to.size();
    }
    return text;
}

std::string render_options(const LetterMap& letters) {
    std::string out;
    for (int i = 0; i < kNumLabels; ++i) {
        if (i > 0) out += ' ';
        out += static_cast<char>('A' + i);
        out += '.';
        out += display_name(letters[static_cast<std::size_t>(i)]);
        out += '.';
    }
    return out;
}

/// First standalone letter at the start of the cleaned response, if any.
std::optional<char> leading_letter(const std::string& raw, char max_letter) {
    std::size_t i = 0;
    while (i < raw.size() && !std::isalnum(static_cast<unsigned char>(raw[i]))) ++i;
    if (i >= raw.size()) return std::nullopt;
    const char c = static_cast<char>(std::toupper(static_cast<unsigned char>(raw[i])));
    if (c < 'A' || c > max_letter) return std::nullopt;
    const bool standalone =
        i + 1 >= raw.size() || !std::isalnum(static_cast<unsigned char>(raw[i + 1]));
    if (!standalone) return std::nullopt;
    return c;
}

bool mentions_unchanged(const std::string& norm) {
    return detail::contains_phrase(norm, "leave it unchanged") ||
           detail::contains_word(norm, "unchanged");
}

bool mentions_none(const std::string& norm) {
    return detail::contains_phrase(norm, "none of the other options") ||
           detail::contains_word(norm, "none");
}

std::string read_file_or(const std::filesystem::path& path, const char* fallback) {
    std::ifstream in(path);
    if (!in) return fallback;
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

PromptProtocol PromptProtocol::defaults(Mode mode) {
    PromptProtocol p;
    p.mode = mode;
    p.single_template = kSingleRoundDefault;
    p.round1_template = kRound1Default;
    p.round2_template = kRound2Default;
    return p;
}

PromptProtocol PromptProtocol::from_dir(Mode mode, const std::filesystem::path& dir) {
    PromptProtocol p = defaults(mode);
    p.single_template = read_file_or(dir / "single_round.txt", kSingleRoundDefault);
    p.round1_template = read_file_or(dir / "two_round_1.txt", kRound1Default);
    p.round2_template = read_file_or(dir / "two_round_2.txt", kRound2Default);
    return p;
}

std::optional<PromptProtocol::Mode> PromptProtocol::parse_mode(const std::string& name) {
    const std::string n = detail::to_lower_ascii(detail::trim(name));
    if (n == "single-round" || n == "single" || n == "single_round") return Mode::SingleRound;
    if (n == "two-round" || n == "two" || n == "two_round") return Mode::TwoRound;
    return std::nullopt;
}

const char* PromptProtocol::mode_name(Mode mode) {
    return mode == Mode::SingleRound ? "single-round" : "two-round";
}

std::string build_single_round_prompt(const PromptProtocol& protocol, const std::string& question,
                                      const LetterMap& letters) {
    std::string out = replace_all(protocol.single_template, "{QUESTION}", question);
    return replace_all(out, "{OPTIONS}", render_options(letters));
}

std::optional<GuidanceLabel> parse_prediction(const std::string& raw, const LetterMap& letters) {
    if (auto letter = leading_letter(raw, 'F'))
        return letters[static_cast<std::size_t>(*letter - 'A')];

    const std::string norm = detail::normalize_for_match(raw);
    std::vector<GuidanceLabel> hits;
    auto add = [&](GuidanceLabel g, bool hit) {
        if (hit) hits.push_back(g);
    };
    add(GuidanceLabel::Left, detail::contains_word(norm, "left"));
    add(GuidanceLabel::Right, detail::contains_word(norm, "right"));
    add(GuidanceLabel::Up, detail::contains_word(norm, "up"));
    add(GuidanceLabel::Down, detail::contains_word(norm, "down"));
    add(GuidanceLabel::Unchanged, mentions_unchanged(norm));
    add(GuidanceLabel::None, mentions_none(norm));
    if (hits.size() == 1) return hits.front();
    return std::nullopt;  // no match, or ambiguous
}

Round1Outcome parse_round1(const std::string& raw) {
    if (auto letter = leading_letter(raw, 'C')) {
        switch (*letter) {
            case 'A': return Round1Outcome::Unchanged;
            case 'B': return Round1Outcome::None;
            case 'C': return Round1Outcome::Reframe;
        }
    }
    const std::string norm = detail::normalize_for_match(raw);
    const bool unchanged = mentions_unchanged(norm);
    const bool none = mentions_none(norm);
    const bool reframe = detail::contains_word(norm, "reframe") ||
                         detail::contains_word(norm, "reframing") ||
                         detail::contains_word(norm, "framing") ||
                         detail::contains_phrase(norm, "move camera") ||
                         detail::contains_phrase(norm, "move the camera") ||
                         detail::contains_word(norm, "left") ||
                         detail::contains_word(norm, "right") ||
                         detail::contains_word(norm, "up") ||
                         detail::contains_word(norm, "down");
    const int n = (unchanged ? 1 : 0) + (none ? 1 : 0) + (reframe ? 1 : 0);
    if (n != 1) return Round1Outcome::Unparseable;
    if (unchanged) return Round1Outcome::Unchanged;
    if (none) return Round1Outcome::None;
    return Round1Outcome::Reframe;
}

std::optional<Direction> parse_round2(const std::string& raw) {
    if (auto letter = leading_letter(raw, 'D'))
        return kRound2Letters[static_cast<std::size_t>(*letter - 'A')];
    const std::string norm = detail::normalize_for_match(raw);
    std::vector<Direction> hits;
    for (Direction d : {Direction::Left, Direction::Right, Direction::Up, Direction::Down}) {
        if (detail::contains_word(norm, canonical_name(d))) hits.push_back(d);
    }
    if (hits.size() == 1) return hits.front();
    return std::nullopt;
}

EvalReport report_from_predictions(
    const std::vector<std::pair<GuidanceLabel, std::optional<GuidanceLabel>>>& rows,
    std::size_t failed_count) {
    EvalReport r;
    r.total = rows.size();
    std::map<GuidanceLabel, std::size_t> excluded_per_class;
    for (GuidanceLabel g : kAllLabels) excluded_per_class[g] = 0;

    for (const auto& [truth, pred] : rows) {
        if (!pred) {
            ++excluded_per_class[truth];
            continue;
        }
        ++r.confusion[static_cast<std::size_t>(truth)][static_cast<std::size_t>(*pred)];
    }
    for (GuidanceLabel g : kAllLabels) r.excluded += excluded_per_class[g];
    r.excluded_failed = failed_count;
    r.excluded_unparseable = r.excluded - failed_count;

    std::size_t included = 0;
    std::size_t trace = 0;
    std::array<std::size_t, kNumLabels> row_sum{};
    std::array<std::size_t, kNumLabels> col_sum{};
    for (std::size_t i = 0; i < kNumLabels; ++i) {
        for (std::size_t j = 0; j < kNumLabels; ++j) {
            row_sum[i] += r.confusion[i][j];
            col_sum[j] += r.confusion[i][j];
            included += r.confusion[i][j];
        }
        trace += r.confusion[i][i];
    }
    r.empty_after_exclusion = included == 0;

    double f1_sum = 0.0;
    for (GuidanceLabel g : kAllLabels) {
        const auto i = static_cast<std::size_t>(g);
        PerClassMetrics pc;
        const std::size_t tp = r.confusion[i][i];
        pc.precision = col_sum[i] > 0 ? static_cast<double>(tp) / col_sum[i] : 0.0;
        pc.recall = row_sum[i] > 0 ? static_cast<double>(tp) / row_sum[i] : 0.0;
        pc.f1 = (pc.precision + pc.recall) > 0.0
                    ? 2.0 * pc.precision * pc.recall / (pc.precision + pc.recall)
                    : 0.0;
        pc.support = row_sum[i] + excluded_per_class[g];
        pc.excluded = excluded_per_class[g];
        f1_sum += pc.f1;
        r.per_class[g] = pc;
    }
    r.macro_f1 = f1_sum / kNumLabels;
    r.accuracy = included > 0 ? static_cast<double>(trace) / included : 0.0;

    std::size_t dir_trace = 0;
    std::size_t dir_rows = 0;
    for (GuidanceLabel g :
         {GuidanceLabel::Left, GuidanceLabel::Right, GuidanceLabel::Up, GuidanceLabel::Down}) {
        const auto i = static_cast<std::size_t>(g);
        dir_trace += r.confusion[i][i];
        dir_rows += row_sum[i];
    }
    r.acc_f = dir_rows > 0 ? static_cast<double>(dir_trace) / dir_rows : 0.0;
    return r;
}

EvalReport run_benchmark(const DatasetManifest& bench, const PromptProtocol& protocol,
                         Oracle& oracle, const EvalOptions& opts) {
    for (const auto& s : bench.samples) {
        if (!s.label)
            throw InvalidArgument("run_benchmark: sample \"" + s.id + "\" has no guidance label");
    }

    // letter map per sample: the fixed template order, or a seeded shuffle to
    // probe position bias
    std::vector<LetterMap> letter_maps(bench.size(), template_letter_map());
    if (opts.shuffle_seed) {
        Rng rng(*opts.shuffle_seed);
        for (auto& m : letter_maps) {
            std::vector<GuidanceLabel> labels(kAllLabels.begin(), kAllLabels.end());
            shuffle(labels, rng);
            std::copy(labels.begin(), labels.end(), m.begin());
        }
    }

    std::size_t transport_failures = 0;
    std::size_t total_queries = 0;
    auto count_transport = [&](const std::vector<BatchResult>& results) {
        total_queries += results.size();
        for (const auto& res : results) {
            if (!res.ok && (res.error.rfind("transport:", 0) == 0 ||
                            res.error.rfind("auth:", 0) == 0))
                ++transport_failures;
        }
        if (transport_failures * 2 > total_queries)
            throw TransportError("more than half of the oracle queries failed (" +
                                 std::to_string(transport_failures) + "/" +
                                 std::to_string(total_queries) + ")");
    };

    std::vector<std::pair<GuidanceLabel, std::optional<GuidanceLabel>>> rows(bench.size());
    std::size_t failed = 0;

    if (protocol.mode == PromptProtocol::Mode::SingleRound) {
        std::vector<OracleRequest> reqs;
        reqs.reserve(bench.size());
        for (std::size_t i = 0; i < bench.size(); ++i) {
            const auto& s = bench.samples[i];
            reqs.push_back(OracleRequest{
                s.id, bench.resolve(s),
                build_single_round_prompt(protocol, s.question, letter_maps[i])});
        }
        const auto results = answer_batch(oracle, reqs, opts.max_concurrency, opts.log);
        count_transport(results);
        for (std::size_t i = 0; i < bench.size(); ++i) {
            rows[i].first = *bench.samples[i].label;
            if (!results[i].ok) {
                ++failed;
                continue;
            }
            rows[i].second = parse_prediction(results[i].text, letter_maps[i]);
        }
        return report_from_predictions(rows, failed);
    }

    // two-round protocol
    std::vector<OracleRequest> round1;
    round1.reserve(bench.size());
    for (const auto& s : bench.samples) {
        round1.push_back(OracleRequest{
            s.id, bench.resolve(s),
            replace_all(protocol.round1_template, "{QUESTION}", s.question)});
    }
    const auto results1 = answer_batch(oracle, round1, opts.max_concurrency, opts.log);
    count_transport(results1);

    std::vector<std::size_t> reframe_rows;
    std::vector<OracleRequest> round2;
    for (std::size_t i = 0; i < bench.size(); ++i) {
        const auto& s = bench.samples[i];
        rows[i].first = *s.label;
        if (!results1[i].ok) {
            ++failed;
            continue;
        }
        switch (parse_round1(results1[i].text)) {
            case Round1Outcome::Unchanged:
                rows[i].second = GuidanceLabel::Unchanged;
                break;
            case Round1Outcome::None:
                rows[i].second = GuidanceLabel::None;
                break;
            case Round1Outcome::Unparseable:
                break;
            case Round1Outcome::Reframe: {
                std::string prompt =
                    replace_all(protocol.round2_template, "{QUESTION}", s.question);
                prompt = replace_all(prompt, "{RESULT}", detail::trim(results1[i].text));
                reframe_rows.push_back(i);
                round2.push_back(OracleRequest{s.id + "#2", bench.resolve(s), prompt});
                break;
            }
        }
    }

    const auto results2 = answer_batch(oracle, round2, opts.max_concurrency, opts.log);
    count_transport(results2);
    for (std::size_t k = 0; k < reframe_rows.size(); ++k) {
        const std::size_t i = reframe_rows[k];
        if (!results2[k].ok) {
            ++failed;
            continue;
        }
        if (auto d = parse_round2(results2[k].text)) rows[i].second = label_of(*d);
    }
    return report_from_predictions(rows, failed);
}

nlohmann::json metrics_to_json(const EvalReport& r, const nlohmann::json& config_echo) {
    nlohmann::ordered_json per_class;
    for (GuidanceLabel g : kAllLabels) {
        const auto& pc = r.per_class.at(g);
        per_class[canonical_name(g)] = {{"precision", pc.precision},
                                        {"recall", pc.recall},
                                        {"f1", pc.f1},
                                        {"support", pc.support},
                                        {"excluded", pc.excluded}};
    }
    nlohmann::ordered_json confusion = nlohmann::ordered_json::array();
    for (const auto& row : r.confusion) {
        confusion.push_back(std::vector<std::size_t>(row.begin(), row.end()));
    }
    nlohmann::ordered_json j{{"accuracy", r.accuracy},
                             {"macro_f1", r.macro_f1},
                             {"acc_f", r.acc_f},
                             {"excluded", r.excluded},
                             {"excluded_unparseable", r.excluded_unparseable},
                             {"excluded_failed", r.excluded_failed},
                             {"total", r.total},
                             {"empty_after_exclusion", r.empty_after_exclusion},
                             {"per_class", per_class},
                             {"confusion", confusion},
                             {"config", config_echo}};
    return j;
}

std::string confusion_to_csv(const EvalReport& r) {
    std::ostringstream out;
    out << "true\\predicted";
    for (GuidanceLabel g : kAllLabels) out << "," << short_name(g);
    out << "\n";
    for (GuidanceLabel row : kAllLabels) {
        out << short_name(row);
        for (GuidanceLabel col : kAllLabels) {
            out << ","
                << r.confusion[static_cast<std::size_t>(row)][static_cast<std::size_t>(col)];
        }
        out << "\n";
    }
    return out.str();
}

std::string confusion_to_svg(const EvalReport& r) {
    constexpr int cell = 56;
    constexpr int left = 120;
    constexpr int top = 60;
    const int width = left + cell * kNumLabels + 20;
    const int height = top + cell * kNumLabels + 20;

    std::size_t max_count = 0;
    for (const auto& row : r.confusion) {
        for (std::size_t v : row) max_count = std::max(max_count, v);
    }

    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
        << height << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    svg << "  <text x=\"" << left << "\" y=\"16\">predicted →   (rows: true label)</text>\n";
    for (int j = 0; j < kNumLabels; ++j) {
        svg << "  <text x=\"" << left + j * cell + cell / 2 << "\" y=\"" << top - 8
            << "\" text-anchor=\"middle\">" << short_name(kAllLabels[static_cast<std::size_t>(j)])
            << "</text>\n";
    }
    for (int i = 0; i < kNumLabels; ++i) {
        svg << "  <text x=\"" << left - 8 << "\" y=\"" << top + i * cell + cell / 2 + 4
            << "\" text-anchor=\"end\">" << short_name(kAllLabels[static_cast<std::size_t>(i)])
            << "</text>\n";
        for (int j = 0; j < kNumLabels; ++j) {
            const std::size_t v = r.confusion[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
            const double shade = max_count > 0 ? static_cast<double>(v) / max_count : 0.0;
            // white -> steel blue ramp, proportional to count
            const int red = static_cast<int>(std::lround(255 - shade * (255 - 70)));
            const int green = static_cast<int>(std::lround(255 - shade * (255 - 130)));
            const int blue = static_cast<int>(std::lround(255 - shade * (255 - 180)));
            svg << "  <rect x=\"" << left + j * cell << "\" y=\"" << top + i * cell
                << "\" width=\"" << cell << "\" height=\"" << cell << "\" fill=\"rgb(" << red
                << "," << green << "," << blue << ")\" stroke=\"#888\"/>\n";
            svg << "  <text x=\"" << left + j * cell + cell / 2 << "\" y=\""
                << top + i * cell + cell / 2 + 4 << "\" text-anchor=\"middle\" fill=\""
                << (shade > 0.6 ? "#fff" : "#000") << "\">" << v << "</text>\n";
        }
    }
    svg << "</svg>\n";
    return svg.str();
}

ReportPaths write_report(const EvalReport& report, const std::filesystem::path& out_dir,
                         const nlohmann::json& config_echo) {
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    ReportPaths paths{out_dir / "metrics.json", out_dir / "confusion.csv",
                      out_dir / "confusion.svg"};

    auto write_file = [](const std::filesystem::path& p, const std::string& content) {
        std::ofstream out(p, std::ios::binary | std::ios::trunc);
        if (!out) throw WriteError("cannot write report file: " + p.string());
        out << content;
        if (!out) throw WriteError("short write to " + p.string());
    };
    write_file(paths.metrics_json, metrics_to_json(report, config_echo).dump(2) + "\n");
    write_file(paths.confusion_csv, confusion_to_csv(report));
    write_file(paths.confusion_svg, confusion_to_svg(report));
    return paths;
}

}  // namespace dirguide
