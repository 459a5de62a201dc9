#pragma once

#include <cstdint>
#include <filesystem>
#include <utility>
#include <vector>

#include "dirguide/types.hpp"

namespace dirguide {

/// A validated dataset: image root plus samples whose invariants all hold.
struct DatasetManifest {
    std::filesystem::path image_root;
    std::vector<VqaSample> samples;

    std::filesystem::path resolve(const VqaSample& s) const { return image_root / s.image; }
    std::size_t size() const { return samples.size(); }
};

/// Loads and validates a JSON manifest. image_root is resolved relative to
/// the manifest file's directory when not absolute. Polygons are reduced to
/// tight bboxes. Throws MalformedManifest, DuplicateId, MissingImage,
/// BoundsViolation, DegeneratePolygon.
DatasetManifest load_manifest(const std::filesystem::path& path);

/// Tight axis-aligned box over polygon vertices (min/max per axis).
/// Throws InvalidArgument on fewer than 3 points, DegeneratePolygon on zero
/// width or height.
BBox bbox_from_polygon(const std::vector<std::pair<int, int>>& points);

/// Union of the directional (reframe) and None manifests plus n_answerable
/// samples drawn uniformly (seeded) from answerable_pool and labeled
/// Unchanged. Output sorted by id. All three manifests must share image_root.
/// Throws InsufficientPool when the pool is smaller than n_answerable.
DatasetManifest assemble_benchmark(const DatasetManifest& reframe, const DatasetManifest& none,
                                   const DatasetManifest& answerable_pool, std::size_t n_answerable,
                                   std::uint64_t seed);

/// Serializes a manifest back to the schema load_manifest reads.
void save_manifest(const DatasetManifest& m, const std::filesystem::path& path);

}  // namespace dirguide
