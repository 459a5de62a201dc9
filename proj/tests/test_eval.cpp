#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <map>
#include <optional>
#include <vector>

#include <nlohmann/json.hpp>

#include "dirguide/errors.hpp"
#include "dirguide/eval.hpp"
#include "dirguide/rng.hpp"
#include "test_support.hpp"

using namespace dirguide;
using testsup::ManifestBuilder;
using testsup::TempDir;

namespace {

using Row = std::pair<GuidanceLabel, std::optional<GuidanceLabel>>;

DatasetManifest six_class_benchmark(const TempDir& tmp) {
    ManifestBuilder b(tmp.path(), "bench");
    b.add("b_left", "Where is the cat?", {"cat"}, std::nullopt, "left");
    b.add("b_right", "Where is the dog?", {"dog"}, std::nullopt, "right");
    b.add("b_up", "Where is the bird?", {"bird"}, std::nullopt, "up");
    b.add("b_down", "Where is the shoe?", {"shoe"}, std::nullopt, "down");
    b.add("b_keep", "What is the label?", {"soup"}, std::nullopt, "unchanged");
    b.add("b_none", "What is behind me?", {"wall"}, std::nullopt, "none");
    return load_manifest(b.write());
}

OracleConfig phrase_oracle(const DatasetManifest& bench,
                           const std::map<std::string, GuidanceLabel>& overrides = {}) {
    OracleConfig cfg;
    cfg.scripted.mode = ScriptedOracleSpec::Mode::AnswerTable;
    for (const auto& s : bench.samples) {
        GuidanceLabel say = *s.label;
        auto it = overrides.find(s.id);
        if (it != overrides.end()) say = it->second;
        cfg.scripted.table[s.id] = display_name(say);
    }
    return cfg;
}

}  // namespace

TEST_CASE("parse_prediction resolves letters through the letter map") {
    const LetterMap m = template_letter_map();
    CHECK(parse_prediction("B", m) == GuidanceLabel::Left);
    CHECK(parse_prediction(" b.", m) == GuidanceLabel::Left);
    CHECK(parse_prediction("(F)", m) == GuidanceLabel::None);
    CHECK(parse_prediction("A", m) == GuidanceLabel::Unchanged);

    LetterMap shuffled = {GuidanceLabel::Down, GuidanceLabel::None, GuidanceLabel::Left,
                          GuidanceLabel::Unchanged, GuidanceLabel::Right, GuidanceLabel::Up};
    CHECK(parse_prediction("B", shuffled) == GuidanceLabel::None);
}

TEST_CASE("parse_prediction falls back to unique option phrases") {
    const LetterMap m = template_letter_map();
    CHECK(parse_prediction("The camera should be moved left.", m) == GuidanceLabel::Left);
    CHECK(parse_prediction("move it UP please", m) == GuidanceLabel::Up);
    CHECK(parse_prediction("I would leave it unchanged", m) == GuidanceLabel::Unchanged);
    CHECK(parse_prediction("none of the other options apply", m) == GuidanceLabel::None);
    CHECK_FALSE(parse_prediction("Maybe left or right", m).has_value());
    CHECK_FALSE(parse_prediction("banana", m).has_value());
    CHECK_FALSE(parse_prediction("", m).has_value());
    // "Begin" contains "b" and "left" as substrings of words; neither counts
    CHECK_FALSE(parse_prediction("bereft beginnings", m).has_value());
}

TEST_CASE("round-one parses into the three-way branch") {
    CHECK(parse_round1("A") == Round1Outcome::Unchanged);
    CHECK(parse_round1("B. None of the other options") == Round1Outcome::None);
    CHECK(parse_round1("C") == Round1Outcome::Reframe);
    CHECK(parse_round1("leave it unchanged") == Round1Outcome::Unchanged);
    CHECK(parse_round1("framing") == Round1Outcome::Reframe);
    CHECK(parse_round1("move the camera") == Round1Outcome::Reframe);
    CHECK(parse_round1("Left") == Round1Outcome::Reframe);  // jumping ahead means reframe
    CHECK(parse_round1("gibberish") == Round1Outcome::Unparseable);
    CHECK(parse_round1("unchanged or none") == Round1Outcome::Unparseable);
}

TEST_CASE("round-two parses a single direction") {
    CHECK(parse_round2("left") == Direction::Left);
    CHECK(parse_round2("Move it Right") == Direction::Right);
    CHECK(parse_round2("B") == Direction::Left);   // round-2 letters: A up, B left, C down, D right
    CHECK(parse_round2("A") == Direction::Up);
    CHECK_FALSE(parse_round2("up and down").has_value());
    CHECK_FALSE(parse_round2("E").has_value());
}

TEST_CASE("prompt templates render placeholders and accept directory overrides") {
    const auto protocol = PromptProtocol::defaults(PromptProtocol::Mode::SingleRound);
    const std::string prompt =
        build_single_round_prompt(protocol, "What is this?", template_letter_map());
    CHECK(prompt.find("What is this?") == 0);
    CHECK(prompt.find("how should the camera be moved?") != std::string::npos);
    CHECK(prompt.find("A.Leave it unchanged. B.Left. C.Right. D.Up. E.Down. "
                      "F.None of the other options.") != std::string::npos);

    TempDir tmp;
    testsup::spit(tmp / "single_round.txt", "Custom: {QUESTION} | {OPTIONS}");
    const auto custom = PromptProtocol::from_dir(PromptProtocol::Mode::SingleRound, tmp.path());
    const std::string rendered =
        build_single_round_prompt(custom, "Q?", template_letter_map());
    CHECK(rendered.rfind("Custom: Q? | A.", 0) == 0);
    // files not present keep the built-in text
    CHECK(custom.round1_template == protocol.round1_template);

    CHECK(PromptProtocol::parse_mode("two-round") == PromptProtocol::Mode::TwoRound);
    CHECK(PromptProtocol::parse_mode("SINGLE-ROUND") == PromptProtocol::Mode::SingleRound);
    CHECK_FALSE(PromptProtocol::parse_mode("three-round").has_value());
}

TEST_CASE("the left-right swap fixture produces the hand-computed metrics") {
    // one sample per class; Left predicted Right and vice versa
    std::vector<Row> rows = {
        {GuidanceLabel::Left, GuidanceLabel::Right},
        {GuidanceLabel::Right, GuidanceLabel::Left},
        {GuidanceLabel::Up, GuidanceLabel::Up},
        {GuidanceLabel::Down, GuidanceLabel::Down},
        {GuidanceLabel::Unchanged, GuidanceLabel::Unchanged},
        {GuidanceLabel::None, GuidanceLabel::None},
    };
    const EvalReport r = report_from_predictions(rows);

    CHECK(r.accuracy == doctest::Approx(4.0 / 6.0).epsilon(1e-9));
    CHECK(r.macro_f1 == doctest::Approx(4.0 / 6.0).epsilon(1e-9));
    CHECK(r.acc_f == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(r.excluded == 0);
    const auto left = static_cast<std::size_t>(GuidanceLabel::Left);
    const auto right = static_cast<std::size_t>(GuidanceLabel::Right);
    CHECK(r.confusion[left][right] == 1);
    CHECK(r.confusion[right][left] == 1);
    CHECK(r.confusion[left][left] == 0);
    CHECK(r.per_class.at(GuidanceLabel::Left).f1 == 0.0);
    CHECK(r.per_class.at(GuidanceLabel::Up).f1 == 1.0);
}

TEST_CASE("run_benchmark with a perfect oracle is perfect under both protocols") {
    TempDir tmp;
    const auto bench = six_class_benchmark(tmp);
    auto oracle = make_oracle(phrase_oracle(bench));

    const EvalReport single = run_benchmark(
        bench, PromptProtocol::defaults(PromptProtocol::Mode::SingleRound), *oracle);
    const EvalReport two = run_benchmark(
        bench, PromptProtocol::defaults(PromptProtocol::Mode::TwoRound), *oracle);

    for (const EvalReport* r : {&single, &two}) {
        CHECK(r->accuracy == 1.0);
        CHECK(r->macro_f1 == 1.0);
        CHECK(r->acc_f == 1.0);
        CHECK(r->excluded == 0);
    }
    CHECK(single.confusion == two.confusion);
    CHECK(metrics_to_json(single, {}) == metrics_to_json(two, {}));
}

TEST_CASE("run_benchmark matches the swap fixture end to end") {
    TempDir tmp;
    const auto bench = six_class_benchmark(tmp);
    auto oracle = make_oracle(phrase_oracle(
        bench, {{"b_left", GuidanceLabel::Right}, {"b_right", GuidanceLabel::Left}}));
    const EvalReport r = run_benchmark(
        bench, PromptProtocol::defaults(PromptProtocol::Mode::SingleRound), *oracle);
    CHECK(r.accuracy == doctest::Approx(4.0 / 6.0));
    CHECK(r.macro_f1 == doctest::Approx(4.0 / 6.0));
    CHECK(r.acc_f == doctest::Approx(0.5));
}

TEST_CASE("per-query letter shuffling keeps parses valid and is seed-stable") {
    TempDir tmp;
    const auto bench = six_class_benchmark(tmp);

    // phrases are immune to the letter shuffle
    auto perfect = make_oracle(phrase_oracle(bench));
    EvalOptions opts;
    opts.shuffle_seed = 77;
    const EvalReport r1 = run_benchmark(
        bench, PromptProtocol::defaults(PromptProtocol::Mode::SingleRound), *perfect, opts);
    CHECK(r1.accuracy == 1.0);
    CHECK(r1.excluded == 0);

    // a fixed letter resolves through each query's own map, never excluded
    OracleConfig fixed;
    fixed.scripted.mode = ScriptedOracleSpec::Mode::FixedLetter;
    fixed.scripted.letter = 'A';
    auto fixed_oracle = make_oracle(fixed);
    const EvalReport r2 = run_benchmark(
        bench, PromptProtocol::defaults(PromptProtocol::Mode::SingleRound), *fixed_oracle, opts);
    const EvalReport r3 = run_benchmark(
        bench, PromptProtocol::defaults(PromptProtocol::Mode::SingleRound), *fixed_oracle, opts);
    CHECK(r2.excluded == 0);
    CHECK(r2.confusion == r3.confusion);  // same shuffle seed, same report

    // without shuffling, letter A always means Leave it unchanged
    const EvalReport r4 = run_benchmark(
        bench, PromptProtocol::defaults(PromptProtocol::Mode::SingleRound), *fixed_oracle);
    std::size_t unchanged_col = 0;
    for (GuidanceLabel row : kAllLabels)
        unchanged_col += r4.confusion[static_cast<std::size_t>(row)]
                                     [static_cast<std::size_t>(GuidanceLabel::Unchanged)];
    CHECK(unchanged_col == bench.size());
}

TEST_CASE("an oracle that never matches the options excludes everything") {
    TempDir tmp;
    const auto bench = six_class_benchmark(tmp);
    OracleConfig cfg;
    cfg.scripted.mode = ScriptedOracleSpec::Mode::FixedLetter;
    cfg.scripted.letter = 'Z';  // parses as no option
    auto oracle = make_oracle(cfg);
    const EvalReport r = run_benchmark(
        bench, PromptProtocol::defaults(PromptProtocol::Mode::SingleRound), *oracle);
    CHECK(r.excluded == bench.size());
    CHECK(r.accuracy == 0.0);
    CHECK(r.macro_f1 == 0.0);
    CHECK(r.acc_f == 0.0);
    CHECK(r.empty_after_exclusion);
}

namespace {

struct BruteForce {
    double accuracy = 0, macro_f1 = 0, acc_f = 0;
};

// Independent recomputation straight from the row list.
BruteForce brute_force_metrics(const std::vector<Row>& rows) {
    BruteForce out;
    std::size_t included = 0, correct = 0, dir_included = 0, dir_correct = 0;
    for (const auto& [truth, pred] : rows) {
        if (!pred) continue;
        ++included;
        if (*pred == truth) ++correct;
        if (direction_of(truth)) {
            ++dir_included;
            if (*pred == truth) ++dir_correct;
        }
    }
    double f1_sum = 0;
    for (GuidanceLabel c : kAllLabels) {
        std::size_t tp = 0, pred_c = 0, true_c = 0;
        for (const auto& [truth, pred] : rows) {
            if (!pred) continue;
            if (*pred == c) ++pred_c;
            if (truth == c) ++true_c;
            if (*pred == c && truth == c) ++tp;
        }
        const double p = pred_c ? static_cast<double>(tp) / pred_c : 0.0;
        const double r = true_c ? static_cast<double>(tp) / true_c : 0.0;
        f1_sum += (p + r) > 0 ? 2 * p * r / (p + r) : 0.0;
    }
    out.macro_f1 = f1_sum / kNumLabels;
    out.accuracy = included ? static_cast<double>(correct) / included : 0.0;
    out.acc_f = dir_included ? static_cast<double>(dir_correct) / dir_included : 0.0;
    return out;
}

}  // namespace

namespace {

class AlwaysTransportFail : public Oracle {
public:
    std::string answer(const OracleRequest&) override {
        throw TransportError("synthetic outage");
    }
};

}  // namespace

TEST_CASE("run_benchmark aborts when transport failures pass one half") {
    TempDir tmp;
    const auto bench = six_class_benchmark(tmp);
    AlwaysTransportFail oracle;
    CHECK_THROWS_AS(
        run_benchmark(bench, PromptProtocol::defaults(PromptProtocol::Mode::SingleRound), oracle),
        TransportError);
}

TEST_CASE("metrics match a brute-force oracle on random prediction sets") {
    Rng rng(404);
    for (int trial = 0; trial < 300; ++trial) {
        std::vector<Row> rows;
        std::size_t failed = 0;
        for (GuidanceLabel truth : kAllLabels) {
            const std::size_t n = uniform_below(rng, 21);  // up to 20 samples per class
            for (std::size_t i = 0; i < n; ++i) {
                Row row;
                row.first = truth;
                const auto roll = uniform_below(rng, 8);
                if (roll == 7) {
                    row.second = std::nullopt;  // excluded
                    if (uniform_below(rng, 2) == 0) ++failed;
                } else {
                    row.second = kAllLabels[uniform_below(rng, kAllLabels.size())];
                }
                rows.push_back(row);
            }
        }
        std::size_t nullopt_rows = 0;
        for (const auto& r : rows) {
            if (!r.second) ++nullopt_rows;
        }
        failed = std::min(failed, nullopt_rows);

        const EvalReport r = report_from_predictions(rows, failed);
        const BruteForce bf = brute_force_metrics(rows);
        REQUIRE(r.accuracy == doctest::Approx(bf.accuracy).epsilon(1e-12));
        REQUIRE(r.macro_f1 == doctest::Approx(bf.macro_f1).epsilon(1e-12));
        REQUIRE(r.acc_f == doctest::Approx(bf.acc_f).epsilon(1e-12));

        // exclusion accounting: excluded + confusion total = row count
        std::size_t matrix_total = 0;
        for (const auto& row : r.confusion)
            for (std::size_t v : row) matrix_total += v;
        REQUIRE(r.excluded + matrix_total == rows.size());

        // support bookkeeping: row sums + per-class excluded = supports
        for (GuidanceLabel c : kAllLabels) {
            const auto i = static_cast<std::size_t>(c);
            std::size_t row_sum = 0;
            for (std::size_t v : r.confusion[i]) row_sum += v;
            REQUIRE(row_sum + r.per_class.at(c).excluded == r.per_class.at(c).support);
        }
    }
}

TEST_CASE("write_report emits metrics.json, csv, and svg") {
    TempDir tmp;
    std::vector<Row> rows = {
        {GuidanceLabel::Left, GuidanceLabel::Right},
        {GuidanceLabel::Right, GuidanceLabel::Left},
        {GuidanceLabel::Up, GuidanceLabel::Up},
        {GuidanceLabel::Down, GuidanceLabel::Down},
        {GuidanceLabel::Unchanged, GuidanceLabel::Unchanged},
        {GuidanceLabel::None, GuidanceLabel::None},
    };
    const EvalReport r = report_from_predictions(rows);
    const auto paths = write_report(r, tmp / "report", nlohmann::json{{"protocol", "single-round"}});

    const auto metrics = nlohmann::json::parse(testsup::slurp(paths.metrics_json));
    CHECK(metrics.at("accuracy").get<double>() == doctest::Approx(4.0 / 6.0));
    CHECK(metrics.at("acc_f").get<double>() == doctest::Approx(0.5));
    CHECK(metrics.at("excluded") == 0);
    CHECK(metrics.at("config").at("protocol") == "single-round");

    const std::string csv = testsup::slurp(paths.confusion_csv);
    // 7x7 grid: header + six label rows
    CHECK(csv.find("true\\predicted,Left,Right,Up,Down,O,X\n") == 0);
    CHECK(csv.find("\nLeft,0,1,0,0,0,0\n") != std::string::npos);
    CHECK(csv.find("\nRight,1,0,0,0,0,0\n") != std::string::npos);
    CHECK(csv.find("\nO,0,0,0,0,1,0\n") != std::string::npos);

    const std::string svg = testsup::slurp(paths.confusion_svg);
    CHECK(svg.find("<svg") == 0);
    CHECK(svg.find("</svg>") != std::string::npos);
    CHECK(svg.find(">O<") != std::string::npos);  // heatmap labels O and X
    CHECK(svg.find(">X<") != std::string::npos);
}

TEST_CASE("an identity confusion writes a diagonal-only report") {
    TempDir tmp;
    std::vector<Row> rows;
    for (GuidanceLabel g : kAllLabels) rows.push_back({g, g});
    const EvalReport r = report_from_predictions(rows);
    const auto paths = write_report(r, tmp / "report", {});
    const std::string csv = testsup::slurp(paths.confusion_csv);
    CHECK(csv.find("Left,1,0,0,0,0,0") != std::string::npos);
    CHECK(csv.find("X,0,0,0,0,0,1") != std::string::npos);
    CHECK(r.accuracy == 1.0);
}

TEST_CASE("an empty report still writes zero-count files") {
    TempDir tmp;
    const EvalReport r = report_from_predictions({});
    const auto paths = write_report(r, tmp / "report", {});
    CHECK(std::filesystem::exists(paths.metrics_json));
    CHECK(std::filesystem::exists(paths.confusion_csv));
    CHECK(std::filesystem::exists(paths.confusion_svg));
    const auto metrics = nlohmann::json::parse(testsup::slurp(paths.metrics_json));
    CHECK(metrics.at("accuracy") == 0.0);
    CHECK(metrics.at("total") == 0);
}
