#include "dirguide/perturb.hpp"

#include <cmath>

#include "dirguide/errors.hpp"
#include "dirguide/image.hpp"

namespace dirguide {

namespace {

// round-half-away-from-zero of tenths*extent/10, in exact integer arithmetic
int scaled_tenths(int tenths, int extent) {
    return (tenths * extent + 5) / 10;
}

}  // namespace

CropRect compute_crop(int img_w, int img_h, const BBox& bbox, const PerturbationSpec& spec) {
    if (!bbox.valid_for(img_w, img_h))
        throw InvalidArgument("compute_crop: bbox out of image bounds");
    if (!spec.valid()) throw InvalidArgument("compute_crop: ratio must be in (0,1) tenths");

    const int cut_w = scaled_tenths(spec.ratio_tenths, bbox.w);
    const int cut_h = scaled_tenths(spec.ratio_tenths, bbox.h);

    CropRect r;
    switch (spec.direction) {
        case Direction::Left:
            r = {bbox.x + cut_w, 0, img_w - (bbox.x + cut_w), img_h};
            break;
        case Direction::Right:
            r = {0, 0, bbox.x + bbox.w - cut_w, img_h};
            break;
        case Direction::Up:
            r = {0, bbox.y + cut_h, img_w, img_h - (bbox.y + cut_h)};
            break;
        case Direction::Down:
            r = {0, 0, img_w, bbox.y + bbox.h - cut_h};
            break;
    }
    if (r.w <= 0 || r.h <= 0) throw EmptyCrop("compute_crop: retained region is empty");
    return r;
}

int visible_extent(const BBox& bbox, const CropRect& rect, Direction d) {
    if (d == Direction::Left || d == Direction::Right) {
        const int lo = std::max(bbox.x, rect.x);
        const int hi = std::min(bbox.x + bbox.w, rect.x + rect.w);
        return std::max(0, hi - lo);
    }
    const int lo = std::max(bbox.y, rect.y);
    const int hi = std::min(bbox.y + bbox.h, rect.y + rect.h);
    return std::max(0, hi - lo);
}

std::string perturbed_file_name(const std::string& out_id, const PerturbationSpec& spec) {
    return out_id + "_" + canonical_name(spec.direction) + "_" +
           std::to_string(spec.ratio_tenths) + ".jpg";
}

std::filesystem::path apply_crop(const std::filesystem::path& image_ref, const CropRect& rect,
                                 const PerturbationSpec& spec, const std::filesystem::path& out_dir,
                                 const std::string& out_id) {
    const Image src = load_image(image_ref);
    if (rect.w <= 0 || rect.h <= 0 || rect.x < 0 || rect.y < 0 || rect.x + rect.w > src.width ||
        rect.y + rect.h > src.height)
        throw InvalidArgument("apply_crop: rect out of bounds for " + image_ref.string());

    Image out;
    out.width = rect.w;
    out.height = rect.h;
    out.pixels.resize(static_cast<std::size_t>(rect.w) * rect.h * 3);
    const std::size_t row_bytes = static_cast<std::size_t>(rect.w) * 3;
    for (int y = 0; y < rect.h; ++y) {
        const std::uint8_t* src_row = src.at(rect.x, rect.y + y);
        std::copy(src_row, src_row + row_bytes, out.pixels.begin() + row_bytes * y);
    }

    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    const std::filesystem::path out_path = out_dir / perturbed_file_name(out_id, spec);
    save_jpeg(out, out_path, 95);
    return out_path;
}

std::vector<PerturbationSpec> perturbation_grid_tenths(int lo_tenths, int hi_tenths,
                                                       int step_tenths) {
    if (step_tenths <= 0) throw InvalidArgument("perturbation_grid: step must be positive");
    if (lo_tenths < 1 || hi_tenths > 9 || lo_tenths > hi_tenths)
        throw EmptyRange("perturbation_grid: need 0 < lo <= hi < 1");
    std::vector<PerturbationSpec> grid;
    for (Direction d : {Direction::Left, Direction::Right, Direction::Up, Direction::Down}) {
        for (int t = lo_tenths; t <= hi_tenths; t += step_tenths) {
            grid.push_back(PerturbationSpec{d, t});
        }
    }
    return grid;
}

namespace {

int to_tenths(double ratio, const char* what) {
    const double scaled = ratio * 10.0;
    const int tenths = static_cast<int>(std::lround(scaled));
    if (std::abs(scaled - tenths) > 1e-6)
        throw InvalidArgument(std::string("perturbation_grid: ") + what +
                              " must be a multiple of 0.1");
    return tenths;
}

}  // namespace

std::vector<PerturbationSpec> perturbation_grid(double range_lo, double range_hi, double step) {
    if (!(range_lo > 0.0) || !(range_hi < 1.0) || range_lo > range_hi)
        throw EmptyRange("perturbation_grid: need 0 < lo <= hi < 1");
    if (!(step > 0.0)) throw InvalidArgument("perturbation_grid: step must be positive");
    return perturbation_grid_tenths(to_tenths(range_lo, "lo"), to_tenths(range_hi, "hi"),
                                    to_tenths(step, "step"));
}

}  // namespace dirguide
