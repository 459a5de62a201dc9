#include "dirguide/types.hpp"

#include <nlohmann/json.hpp>

#include "dirguide/errors.hpp"
#include "text_util.hpp"

namespace dirguide {

const char* canonical_name(Direction d) {
    switch (d) {
        case Direction::Left: return "left";
        case Direction::Right: return "right";
        case Direction::Up: return "up";
        case Direction::Down: return "down";
    }
    return "left";
}

const char* canonical_name(GuidanceLabel g) {
    switch (g) {
        case GuidanceLabel::Left: return "left";
        case GuidanceLabel::Right: return "right";
        case GuidanceLabel::Up: return "up";
        case GuidanceLabel::Down: return "down";
        case GuidanceLabel::Unchanged: return "unchanged";
        case GuidanceLabel::None: return "none";
    }
    return "none";
}

const char* display_name(GuidanceLabel g) {
    switch (g) {
        case GuidanceLabel::Left: return "Left";
        case GuidanceLabel::Right: return "Right";
        case GuidanceLabel::Up: return "Up";
        case GuidanceLabel::Down: return "Down";
        case GuidanceLabel::Unchanged: return "Leave it unchanged";
        case GuidanceLabel::None: return "None of the other options";
    }
    return "None of the other options";
}

const char* short_name(GuidanceLabel g) {
    switch (g) {
        case GuidanceLabel::Left: return "Left";
        case GuidanceLabel::Right: return "Right";
        case GuidanceLabel::Up: return "Up";
        case GuidanceLabel::Down: return "Down";
        case GuidanceLabel::Unchanged: return "O";
        case GuidanceLabel::None: return "X";
    }
    return "X";
}

GuidanceLabel label_of(Direction d) {
    return static_cast<GuidanceLabel>(static_cast<std::uint8_t>(d));
}

std::optional<Direction> direction_of(GuidanceLabel g) {
    const auto v = static_cast<std::uint8_t>(g);
    if (v <= static_cast<std::uint8_t>(Direction::Down)) return static_cast<Direction>(v);
    return std::nullopt;
}

std::optional<GuidanceLabel> parse_label(const std::string& name) {
    const std::string n = detail::to_lower_ascii(detail::trim(name));
    for (GuidanceLabel g : kAllLabels) {
        if (n == canonical_name(g)) return g;
    }
    if (n == "leave it unchanged") return GuidanceLabel::Unchanged;
    if (n == "none of the other options") return GuidanceLabel::None;
    return std::nullopt;
}

std::optional<Direction> parse_direction(const std::string& name) {
    if (auto g = parse_label(name)) return direction_of(*g);
    return std::nullopt;
}

LetterMap template_letter_map() {
    return {GuidanceLabel::Unchanged, GuidanceLabel::Left, GuidanceLabel::Right,
            GuidanceLabel::Up,        GuidanceLabel::Down, GuidanceLabel::None};
}

bool is_bijection(const LetterMap& m) {
    std::array<bool, kNumLabels> seen{};
    for (GuidanceLabel g : m) {
        const auto idx = static_cast<std::size_t>(g);
        if (idx >= kNumLabels || seen[idx]) return false;
        seen[idx] = true;
    }
    return true;
}

char letter_for(const LetterMap& m, GuidanceLabel g) {
    for (int i = 0; i < kNumLabels; ++i) {
        if (m[static_cast<std::size_t>(i)] == g) return static_cast<char>('A' + i);
    }
    throw InvalidArgument("letter_for: label missing from letter map");
}

namespace {

GuidanceLabel label_from_json(const nlohmann::json& j, const char* context) {
    const auto s = j.get<std::string>();
    if (auto g = parse_label(s)) return *g;
    throw MalformedManifest(std::string(context) + ": unknown label \"" + s + "\"");
}

Direction direction_from_json(const nlohmann::json& j, const char* context) {
    const auto s = j.get<std::string>();
    if (auto d = parse_direction(s)) return *d;
    throw MalformedManifest(std::string(context) + ": unknown direction \"" + s + "\"");
}

}  // namespace

void to_json(nlohmann::json& j, const BBox& b) {
    j = nlohmann::json{{"x", b.x}, {"y", b.y}, {"w", b.w}, {"h", b.h}};
}

void from_json(const nlohmann::json& j, BBox& b) {
    j.at("x").get_to(b.x);
    j.at("y").get_to(b.y);
    j.at("w").get_to(b.w);
    j.at("h").get_to(b.h);
}

void to_json(nlohmann::json& j, const PerturbationSpec& s) {
    j = nlohmann::json{{"direction", canonical_name(s.direction)}, {"ratio_tenths", s.ratio_tenths}};
}

void from_json(const nlohmann::json& j, PerturbationSpec& s) {
    s.direction = direction_from_json(j.at("direction"), "PerturbationSpec");
    j.at("ratio_tenths").get_to(s.ratio_tenths);
}

void to_json(nlohmann::json& j, const VqaSample& s) {
    j = nlohmann::json{{"id", s.id},
                       {"image", s.image},
                       {"question", s.question},
                       {"answers", s.answers},
                       {"bbox", nullptr},
                       {"polygon", nullptr},
                       {"label", nullptr},
                       {"split", nullptr}};
    if (s.bbox) j["bbox"] = *s.bbox;
    if (s.label) j["label"] = canonical_name(*s.label);
    if (s.split) j["split"] = *s.split;
}

void from_json(const nlohmann::json& j, VqaSample& s) {
    j.at("id").get_to(s.id);
    j.at("image").get_to(s.image);
    j.at("question").get_to(s.question);
    j.at("answers").get_to(s.answers);
    s.bbox.reset();
    s.label.reset();
    s.split.reset();
    if (j.contains("bbox") && !j.at("bbox").is_null()) s.bbox = j.at("bbox").get<BBox>();
    if (j.contains("label") && !j.at("label").is_null())
        s.label = label_from_json(j.at("label"), "sample label");
    if (j.contains("split") && !j.at("split").is_null()) s.split = j.at("split").get<std::string>();
}

void to_json(nlohmann::json& j, const Provenance& p) {
    const char* kind = p.kind == Provenance::Kind::Perturbation ? "perturbation"
                       : p.kind == Provenance::Kind::Mismatch   ? "mismatch"
                                                                : "benchmark";
    j = nlohmann::json{{"source_id", p.source_id}, {"kind", kind}};
    if (p.spec) j["spec"] = *p.spec;
    if (p.image_source_id) j["image_source_id"] = *p.image_source_id;
}

void from_json(const nlohmann::json& j, Provenance& p) {
    j.at("source_id").get_to(p.source_id);
    const auto kind = j.at("kind").get<std::string>();
    if (kind == "perturbation") {
        p.kind = Provenance::Kind::Perturbation;
    } else if (kind == "mismatch") {
        p.kind = Provenance::Kind::Mismatch;
    } else if (kind == "benchmark") {
        p.kind = Provenance::Kind::Benchmark;
    } else {
        throw MalformedManifest("Provenance: unknown kind \"" + kind + "\"");
    }
    p.spec.reset();
    p.image_source_id.reset();
    if (j.contains("spec") && !j.at("spec").is_null()) p.spec = j.at("spec").get<PerturbationSpec>();
    if (j.contains("image_source_id") && !j.at("image_source_id").is_null())
        p.image_source_id = j.at("image_source_id").get<std::string>();
}

void to_json(nlohmann::json& j, const GuidanceSample& s) {
    std::string letters;
    for (GuidanceLabel g : s.letter_map) {
        if (!letters.empty()) letters += ',';
        letters += canonical_name(g);
    }
    j = nlohmann::json{{"id", s.id},           {"image", s.image},
                       {"question", s.question}, {"label", canonical_name(s.label)},
                       {"letter_map", letters},  {"provenance", s.provenance}};
}

void from_json(const nlohmann::json& j, GuidanceSample& s) {
    j.at("id").get_to(s.id);
    j.at("image").get_to(s.image);
    j.at("question").get_to(s.question);
    s.label = label_from_json(j.at("label"), "GuidanceSample label");
    const auto letters = j.at("letter_map").get<std::string>();
    std::size_t pos = 0;
    for (int i = 0; i < kNumLabels; ++i) {
        const std::size_t comma = letters.find(',', pos);
        const std::string part =
            letters.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
        auto g = parse_label(part);
        if (!g) throw MalformedManifest("GuidanceSample: bad letter_map entry \"" + part + "\"");
        s.letter_map[static_cast<std::size_t>(i)] = *g;
        if (comma == std::string::npos) {
            if (i != kNumLabels - 1)
                throw MalformedManifest("GuidanceSample: letter_map needs six entries");
            break;
        }
        pos = comma + 1;
    }
    if (!is_bijection(s.letter_map))
        throw MalformedManifest("GuidanceSample: letter_map is not a bijection");
    s.provenance = j.at("provenance").get<Provenance>();
}

}  // namespace dirguide
