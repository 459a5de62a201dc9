#include "dirguide/ingest.hpp"

#include <algorithm>
#include <fstream>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "dirguide/errors.hpp"
#include "dirguide/image.hpp"
#include "dirguide/rng.hpp"

namespace dirguide {

BBox bbox_from_polygon(const std::vector<std::pair<int, int>>& points) {
    if (points.size() < 3)
        throw InvalidArgument("bbox_from_polygon: need at least 3 points");
    int min_x = points[0].first, max_x = points[0].first;
    int min_y = points[0].second, max_y = points[0].second;
    for (const auto& [x, y] : points) {
        min_x = std::min(min_x, x);
        max_x = std::max(max_x, x);
        min_y = std::min(min_y, y);
        max_y = std::max(max_y, y);
    }
    if (max_x == min_x || max_y == min_y)
        throw DegeneratePolygon("bbox_from_polygon: polygon has zero extent");
    return BBox{min_x, min_y, max_x - min_x, max_y - min_y};
}

namespace {

VqaSample sample_from_json(const nlohmann::json& j, std::size_t index) {
    const std::string where = "samples[" + std::to_string(index) + "]";
    if (!j.is_object()) throw MalformedManifest(where + ": not an object");
    for (const char* key : {"id", "image", "question", "answers"}) {
        if (!j.contains(key)) throw MalformedManifest(where + ": missing field \"" + key + "\"");
    }

    VqaSample s;
    try {
        s = j.get<VqaSample>();
    } catch (const MalformedManifest&) {
        throw;
    } catch (const nlohmann::json::exception& e) {
        throw MalformedManifest(where + ": " + e.what());
    }
    if (s.id.empty()) throw MalformedManifest(where + ": empty id");

    const bool has_bbox = !j.at("bbox").is_null();
    const bool has_polygon = j.contains("polygon") && !j.at("polygon").is_null();
    if (has_bbox && has_polygon)
        throw MalformedManifest(where + " (" + s.id + "): bbox and polygon are exclusive");
    if (has_polygon) {
        std::vector<std::pair<int, int>> pts;
        for (const auto& p : j.at("polygon")) {
            if (!p.is_array() || p.size() != 2)
                throw MalformedManifest(where + " (" + s.id + "): polygon points must be [x,y]");
            pts.emplace_back(p[0].get<int>(), p[1].get<int>());
        }
        try {
            s.bbox = bbox_from_polygon(pts);
        } catch (const Error& e) {
            throw DegeneratePolygon(where + " (" + s.id + "): " + e.what());
        }
    }
    return s;
}

}  // namespace

DatasetManifest load_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw MalformedManifest("cannot open manifest: " + path.string());
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw MalformedManifest("manifest parse error in " + path.string() + ": " + e.what());
    }
    if (!doc.is_object() || !doc.contains("image_root") || !doc.contains("samples"))
        throw MalformedManifest(path.string() + ": expected {\"image_root\", \"samples\"}");

    DatasetManifest m;
    std::filesystem::path root = doc.at("image_root").get<std::string>();
    if (root.is_relative()) root = path.parent_path() / root;
    m.image_root = root;

    const auto& samples = doc.at("samples");
    if (!samples.is_array()) throw MalformedManifest(path.string() + ": samples must be an array");

    std::unordered_set<std::string> ids;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        VqaSample s = sample_from_json(samples[i], i);
        if (!ids.insert(s.id).second) throw DuplicateId("duplicate sample id \"" + s.id + "\"");

        const std::filesystem::path img = m.image_root / s.image;
        std::error_code ec;
        if (!std::filesystem::is_regular_file(img, ec))
            throw MissingImage("sample \"" + s.id + "\": image not found: " + img.string());

        if (s.bbox) {
            ImageSize size;
            try {
                size = read_image_size(img);
            } catch (const DecodeError& e) {
                throw MissingImage("sample \"" + s.id + "\": unreadable image: " + e.what());
            }
            if (!s.bbox->valid_for(size.width, size.height))
                throw BoundsViolation("sample \"" + s.id + "\": bbox exceeds image bounds (" +
                                      std::to_string(size.width) + "x" +
                                      std::to_string(size.height) + ")");
        }
        m.samples.push_back(std::move(s));
    }
    return m;
}

void save_manifest(const DatasetManifest& m, const std::filesystem::path& path) {
    nlohmann::json doc;
    doc["image_root"] = m.image_root.string();
    doc["samples"] = nlohmann::json::array();
    for (const auto& s : m.samples) doc["samples"].push_back(s);
    std::ofstream out(path);
    if (!out) throw WriteError("cannot write manifest: " + path.string());
    out << doc.dump(2) << "\n";
    if (!out) throw WriteError("short write to " + path.string());
}

DatasetManifest assemble_benchmark(const DatasetManifest& reframe, const DatasetManifest& none,
                                   const DatasetManifest& answerable_pool, std::size_t n_answerable,
                                   std::uint64_t seed) {
    for (const auto& s : reframe.samples) {
        if (!s.label || !direction_of(*s.label))
            throw MalformedManifest("reframe sample \"" + s.id + "\" lacks a directional label");
    }
    for (const auto& s : none.samples) {
        if (!s.label || *s.label != GuidanceLabel::None)
            throw MalformedManifest("none sample \"" + s.id + "\" is not labeled none");
    }
    if (answerable_pool.size() < n_answerable)
        throw InsufficientPool("answerable pool has " + std::to_string(answerable_pool.size()) +
                               " samples, need " + std::to_string(n_answerable));

    const bool any = !reframe.samples.empty() || !none.samples.empty() || n_answerable > 0;
    DatasetManifest out;
    out.image_root = !reframe.samples.empty()  ? reframe.image_root
                     : !none.samples.empty()   ? none.image_root
                                               : answerable_pool.image_root;
    if (any) {
        auto same_root = [&](const DatasetManifest& m) {
            return m.samples.empty() || m.image_root == out.image_root;
        };
        if (!same_root(reframe) || !same_root(none) ||
            (n_answerable > 0 && answerable_pool.image_root != out.image_root))
            throw MalformedManifest("assemble_benchmark: manifests must share image_root");
    }

    out.samples = reframe.samples;
    out.samples.insert(out.samples.end(), none.samples.begin(), none.samples.end());

    Rng rng(seed);
    for (std::size_t idx : sample_indices(rng, answerable_pool.size(), n_answerable)) {
        VqaSample s = answerable_pool.samples[idx];
        s.label = GuidanceLabel::Unchanged;
        out.samples.push_back(std::move(s));
    }

    std::sort(out.samples.begin(), out.samples.end(),
              [](const VqaSample& a, const VqaSample& b) { return a.id < b.id; });
    std::unordered_set<std::string> ids;
    for (const auto& s : out.samples) {
        if (!ids.insert(s.id).second)
            throw DuplicateId("assemble_benchmark: id \"" + s.id + "\" appears in two parts");
    }
    return out;
}

}  // namespace dirguide
