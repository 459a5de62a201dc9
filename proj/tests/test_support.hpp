#pragma once

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dirguide/image.hpp"
#include "dirguide/ingest.hpp"
#include "dirguide/types.hpp"

namespace testsup {

/// Unique scratch directory, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& prefix = "dirguide_test") {
        const auto base = std::filesystem::temp_directory_path();
        static std::mt19937_64 rng{std::random_device{}()};
        for (int attempt = 0; attempt < 64; ++attempt) {
            auto candidate = base / (prefix + "_" + std::to_string(rng()));
            std::error_code ec;
            if (std::filesystem::create_directory(candidate, ec)) {
                path_ = candidate;
                return;
            }
        }
        throw std::runtime_error("TempDir: could not create scratch directory");
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

inline std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void spit(const std::filesystem::path& p, const std::string& content) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out << content;
}

inline std::vector<nlohmann::json> read_jsonl(const std::filesystem::path& p) {
    std::ifstream in(p);
    std::vector<nlohmann::json> records;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty()) records.push_back(nlohmann::json::parse(line));
    }
    return records;
}

inline void write_gray_image(const std::filesystem::path& p, int w, int h,
                             std::uint8_t value = 128) {
    const auto img = dirguide::Image::solid(w, h, value, value, value);
    if (p.extension() == ".ppm") {
        dirguide::save_ppm(img, p);
    } else {
        dirguide::save_jpeg(img, p);
    }
}

/// Manifest builder for fixtures; writes images on the fly.
class ManifestBuilder {
public:
    ManifestBuilder(const std::filesystem::path& dir, std::string name)
        : dir_(dir), name_(std::move(name)) {
        std::filesystem::create_directories(dir_ / "img");
    }

    ManifestBuilder& add(const std::string& id, const std::string& question,
                         std::vector<std::string> answers,
                         std::optional<dirguide::BBox> bbox = std::nullopt,
                         std::optional<std::string> label = std::nullopt, int img_w = 100,
                         int img_h = 80) {
        const std::string image = "img/" + id + ".ppm";
        write_gray_image(dir_ / image, img_w, img_h);
        nlohmann::json s{{"id", id},         {"image", image}, {"question", question},
                         {"answers", answers}, {"bbox", nullptr}, {"polygon", nullptr},
                         {"label", nullptr},   {"split", nullptr}};
        if (bbox) s["bbox"] = {{"x", bbox->x}, {"y", bbox->y}, {"w", bbox->w}, {"h", bbox->h}};
        if (label) s["label"] = *label;
        samples_.push_back(std::move(s));
        return *this;
    }

    /// Adds a sample that reuses an existing image file (no rewrite).
    ManifestBuilder& add_shared_image(const std::string& id, const std::string& image,
                                      const std::string& question, std::vector<std::string> answers,
                                      std::optional<dirguide::BBox> bbox = std::nullopt,
                                      std::optional<std::string> label = std::nullopt) {
        nlohmann::json s{{"id", id},         {"image", image}, {"question", question},
                         {"answers", answers}, {"bbox", nullptr}, {"polygon", nullptr},
                         {"label", nullptr},   {"split", nullptr}};
        if (bbox) s["bbox"] = {{"x", bbox->x}, {"y", bbox->y}, {"w", bbox->w}, {"h", bbox->h}};
        if (label) s["label"] = *label;
        samples_.push_back(std::move(s));
        return *this;
    }

    std::filesystem::path write() const {
        nlohmann::json doc{{"image_root", "."}, {"samples", samples_}};
        const auto path = dir_ / (name_ + ".json");
        spit(path, doc.dump(2));
        return path;
    }

    const std::filesystem::path& dir() const { return dir_; }

private:
    std::filesystem::path dir_;
    std::string name_;
    std::vector<nlohmann::json> samples_;
};

}  // namespace testsup
