#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace dirguide {

/// Camera-move direction that undoes a crop perturbation.
enum class Direction : std::uint8_t { Left = 0, Right = 1, Up = 2, Down = 3 };

/// Six-way guidance decision. Unchanged is shown to models as
/// "Leave it unchanged", None as "None of the other options".
enum class GuidanceLabel : std::uint8_t {
    Left = 0,
    Right = 1,
    Up = 2,
    Down = 3,
    Unchanged = 4,
    None = 5
};

inline constexpr int kNumLabels = 6;
inline constexpr std::array<GuidanceLabel, kNumLabels> kAllLabels = {
    GuidanceLabel::Left, GuidanceLabel::Right,     GuidanceLabel::Up,
    GuidanceLabel::Down, GuidanceLabel::Unchanged, GuidanceLabel::None};

const char* canonical_name(Direction d);
const char* canonical_name(GuidanceLabel g);
/// Prompt wording for a label ("Left", ..., "Leave it unchanged", "None of the other options").
const char* display_name(GuidanceLabel g);
/// Short heatmap/report label; directions spell out, Unchanged is "O", None is "X".
const char* short_name(GuidanceLabel g);

GuidanceLabel label_of(Direction d);
std::optional<Direction> direction_of(GuidanceLabel g);

/// Case-insensitive parse of a canonical label name. Empty optional on no match.
std::optional<GuidanceLabel> parse_label(const std::string& name);
std::optional<Direction> parse_direction(const std::string& name);

/// Axis-aligned pixel box, x/y top-left, end-exclusive extents.
struct BBox {
    int x = 0;
    int y = 0;
    int w = 0;
    int h = 0;

    bool valid_for(int img_w, int img_h) const {
        return w > 0 && h > 0 && x >= 0 && y >= 0 && x + w <= img_w && y + h <= img_h;
    }
    bool operator==(const BBox&) const = default;
};

/// One directional crop: direction plus ratio stored as integer tenths (1..9)
/// so file names and dedup keys stay bit-exact.
struct PerturbationSpec {
    Direction direction = Direction::Left;
    int ratio_tenths = 1;

    double ratio() const { return ratio_tenths / 10.0; }
    bool valid() const { return ratio_tenths >= 1 && ratio_tenths <= 9; }
    bool operator==(const PerturbationSpec&) const = default;
};

/// One grounded image-question-answers record.
struct VqaSample {
    std::string id;
    std::string image;  // path relative to the manifest's image_root
    std::string question;
    std::vector<std::string> answers;
    std::optional<BBox> bbox;
    std::optional<GuidanceLabel> label;  // pre-annotated guidance, benchmark rows only
    std::optional<std::string> split;

    bool operator==(const VqaSample&) const = default;
};

/// Bijection from option letters A..F to the six labels; index 0 is 'A'.
using LetterMap = std::array<GuidanceLabel, kNumLabels>;

/// Fixed template order: A.Leave it unchanged. B.Left. C.Right. D.Up. E.Down. F.None of the other options.
LetterMap template_letter_map();
bool is_bijection(const LetterMap& m);
/// Letter assigned to `g` under `m` ('A'..'F').
char letter_for(const LetterMap& m, GuidanceLabel g);

struct Provenance {
    enum class Kind : std::uint8_t { Perturbation, Mismatch, Benchmark };
    std::string source_id;
    Kind kind = Kind::Perturbation;
    std::optional<PerturbationSpec> spec;        // Perturbation rows
    std::optional<std::string> image_source_id;  // Mismatch rows

    bool operator==(const Provenance&) const = default;
};

/// A perturbed (or mismatched) image-question pair ready for JSONL emission.
struct GuidanceSample {
    std::string id;
    std::string image;  // path relative to the corpus root
    std::string question;
    GuidanceLabel label = GuidanceLabel::Unchanged;
    LetterMap letter_map = template_letter_map();
    Provenance provenance;

    bool operator==(const GuidanceSample&) const = default;
};

// JSON round trip for every core type. Deserialize(serialize(x)) == x.
void to_json(nlohmann::json& j, const BBox& b);
void from_json(const nlohmann::json& j, BBox& b);
void to_json(nlohmann::json& j, const PerturbationSpec& s);
void from_json(const nlohmann::json& j, PerturbationSpec& s);
void to_json(nlohmann::json& j, const VqaSample& s);
void from_json(const nlohmann::json& j, VqaSample& s);
void to_json(nlohmann::json& j, const Provenance& p);
void from_json(const nlohmann::json& j, Provenance& p);
void to_json(nlohmann::json& j, const GuidanceSample& s);
void from_json(const nlohmann::json& j, GuidanceSample& s);

}  // namespace dirguide
