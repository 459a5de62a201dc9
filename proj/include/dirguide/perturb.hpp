#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "dirguide/types.hpp"

namespace dirguide {

/// Region retained after a directional crop, in source-image pixels.
struct CropRect {
    int x = 0;
    int y = 0;
    int w = 0;
    int h = 0;

    bool operator==(const CropRect&) const = default;
};

/// Retained region for a directional perturbation. The cut line sits inside
/// the bbox at fraction r from side d; everything on side d of the cut,
/// including the image margin beyond the bbox, is removed. The other three
/// image edges are preserved, so the visible bbox fraction along the cut axis
/// is 1 - r up to one pixel of rounding.
/// Throws InvalidArgument on a bad bbox/spec, EmptyCrop when nothing remains.
CropRect compute_crop(int img_w, int img_h, const BBox& bbox, const PerturbationSpec& spec);

/// Visible bbox extent along the cut axis after cropping to `rect`, in pixels.
int visible_extent(const BBox& bbox, const CropRect& rect, Direction d);

/// Decodes image_ref, crops to rect, writes "{out_id}_{dir}_{tenths}.jpg"
/// under out_dir and returns the path. Same inputs give the same bytes.
std::filesystem::path apply_crop(const std::filesystem::path& image_ref, const CropRect& rect,
                                 const PerturbationSpec& spec, const std::filesystem::path& out_dir,
                                 const std::string& out_id);

/// Deterministic output name for a perturbed image, without directory.
std::string perturbed_file_name(const std::string& out_id, const PerturbationSpec& spec);

/// All (direction, ratio) pairs with ratio in {lo, lo+step, ..., hi},
/// directions in Left,Right,Up,Down order, ratios ascending within each.
/// Ratios quantize to tenths; throws EmptyRange / InvalidArgument.
std::vector<PerturbationSpec> perturbation_grid(double range_lo, double range_hi, double step);

/// Integer-tenths form used internally and by the CLI after flag validation.
std::vector<PerturbationSpec> perturbation_grid_tenths(int lo_tenths, int hi_tenths, int step_tenths);

}  // namespace dirguide
