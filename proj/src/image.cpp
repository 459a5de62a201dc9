#include "dirguide/image.hpp"

#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <string>

#include <jpeglib.h>

#include "dirguide/errors.hpp"

namespace dirguide {

Image Image::solid(int w, int h, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
    Image img;
    img.width = w;
    img.height = h;
    img.pixels.resize(static_cast<std::size_t>(w) * h * 3);
    for (std::size_t i = 0; i < img.pixels.size(); i += 3) {
        img.pixels[i] = r;
        img.pixels[i + 1] = g;
        img.pixels[i + 2] = b;
    }
    return img;
}

namespace {

struct JpegErrorTrap {
    jpeg_error_mgr mgr;
    std::jmp_buf jump;
    char message[JMSG_LENGTH_MAX] = {0};
};

void jpeg_error_exit(j_common_ptr cinfo) {
    auto* trap = reinterpret_cast<JpegErrorTrap*>(cinfo->err);
    (*cinfo->err->format_message)(cinfo, trap->message);
    std::longjmp(trap->jump, 1);
}

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

bool has_jpeg_magic(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    unsigned char magic[2] = {0, 0};
    in.read(reinterpret_cast<char*>(magic), 2);
    return in.gcount() == 2 && magic[0] == 0xFF && magic[1] == 0xD8;
}

bool has_ppm_magic(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    char magic[2] = {0, 0};
    in.read(magic, 2);
    return in.gcount() == 2 && magic[0] == 'P' && magic[1] == '6';
}

Image load_jpeg(const std::filesystem::path& path) {
    FilePtr file(std::fopen(path.string().c_str(), "rb"));
    if (!file) throw DecodeError("cannot open image: " + path.string());

    // img lives before the setjmp point so the error longjmp never crosses
    // its initialization
    Image img;
    jpeg_decompress_struct cinfo;
    JpegErrorTrap trap;
    cinfo.err = jpeg_std_error(&trap.mgr);
    trap.mgr.error_exit = jpeg_error_exit;
    if (setjmp(trap.jump)) {
        jpeg_destroy_decompress(&cinfo);
        throw DecodeError("jpeg decode failed for " + path.string() + ": " + trap.message);
    }
    jpeg_create_decompress(&cinfo);
    jpeg_stdio_src(&cinfo, file.get());
    jpeg_read_header(&cinfo, TRUE);
    cinfo.out_color_space = JCS_RGB;
    jpeg_start_decompress(&cinfo);

    img.width = static_cast<int>(cinfo.output_width);
    img.height = static_cast<int>(cinfo.output_height);
    img.pixels.resize(static_cast<std::size_t>(img.width) * img.height * 3);
    const std::size_t stride = static_cast<std::size_t>(img.width) * 3;
    while (cinfo.output_scanline < cinfo.output_height) {
        JSAMPROW row = img.pixels.data() + stride * cinfo.output_scanline;
        jpeg_read_scanlines(&cinfo, &row, 1);
    }
    jpeg_finish_decompress(&cinfo);
    jpeg_destroy_decompress(&cinfo);
    return img;
}

int read_ppm_token(std::istream& in) {
    // Skips whitespace and '#' comments between header fields.
    for (;;) {
        int c = in.peek();
        if (c == '#') {
            std::string line;
            std::getline(in, line);
        } else if (std::isspace(c)) {
            in.get();
        } else {
            break;
        }
    }
    int value = -1;
    in >> value;
    return in ? value : -1;
}

Image load_ppm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DecodeError("cannot open image: " + path.string());
    char magic[2];
    in.read(magic, 2);
    if (in.gcount() != 2 || magic[0] != 'P' || magic[1] != '6')
        throw DecodeError("not a P6 ppm: " + path.string());
    const int w = read_ppm_token(in);
    const int h = read_ppm_token(in);
    const int maxval = read_ppm_token(in);
    if (w <= 0 || h <= 0 || maxval != 255)
        throw DecodeError("unsupported ppm header in " + path.string());
    in.get();  // single whitespace after header
    Image img;
    img.width = w;
    img.height = h;
    img.pixels.resize(static_cast<std::size_t>(w) * h * 3);
    in.read(reinterpret_cast<char*>(img.pixels.data()),
            static_cast<std::streamsize>(img.pixels.size()));
    if (in.gcount() != static_cast<std::streamsize>(img.pixels.size()))
        throw DecodeError("truncated ppm data in " + path.string());
    return img;
}

}  // namespace

Image load_image(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw DecodeError("no such image: " + path.string());
    if (has_jpeg_magic(path)) return load_jpeg(path);
    if (has_ppm_magic(path)) return load_ppm(path);
    throw DecodeError("unrecognized image format: " + path.string());
}

ImageSize read_image_size(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw DecodeError("no such image: " + path.string());
    if (has_ppm_magic(path)) {
        std::ifstream in(path, std::ios::binary);
        char magic[2];
        in.read(magic, 2);
        const int w = read_ppm_token(in);
        const int h = read_ppm_token(in);
        if (w <= 0 || h <= 0) throw DecodeError("unsupported ppm header in " + path.string());
        return {w, h};
    }
    if (!has_jpeg_magic(path)) throw DecodeError("unrecognized image format: " + path.string());

    FilePtr file(std::fopen(path.string().c_str(), "rb"));
    if (!file) throw DecodeError("cannot open image: " + path.string());
    jpeg_decompress_struct cinfo;
    JpegErrorTrap trap;
    cinfo.err = jpeg_std_error(&trap.mgr);
    trap.mgr.error_exit = jpeg_error_exit;
    if (setjmp(trap.jump)) {
        jpeg_destroy_decompress(&cinfo);
        throw DecodeError("jpeg header parse failed for " + path.string() + ": " + trap.message);
    }
    jpeg_create_decompress(&cinfo);
    jpeg_stdio_src(&cinfo, file.get());
    jpeg_read_header(&cinfo, TRUE);
    ImageSize size{static_cast<int>(cinfo.image_width), static_cast<int>(cinfo.image_height)};
    jpeg_destroy_decompress(&cinfo);
    return size;
}

void save_jpeg(const Image& img, const std::filesystem::path& path, int quality) {
    if (img.width <= 0 || img.height <= 0 ||
        img.pixels.size() != static_cast<std::size_t>(img.width) * img.height * 3)
        throw WriteError("save_jpeg: malformed image buffer");
    FilePtr file(std::fopen(path.string().c_str(), "wb"));
    if (!file) throw WriteError("cannot open for writing: " + path.string());

    jpeg_compress_struct cinfo;
    JpegErrorTrap trap;
    cinfo.err = jpeg_std_error(&trap.mgr);
    trap.mgr.error_exit = jpeg_error_exit;
    if (setjmp(trap.jump)) {
        jpeg_destroy_compress(&cinfo);
        throw WriteError("jpeg encode failed for " + path.string() + ": " + trap.message);
    }
    jpeg_create_compress(&cinfo);
    jpeg_stdio_dest(&cinfo, file.get());
    cinfo.image_width = static_cast<JDIMENSION>(img.width);
    cinfo.image_height = static_cast<JDIMENSION>(img.height);
    cinfo.input_components = 3;
    cinfo.in_color_space = JCS_RGB;
    jpeg_set_defaults(&cinfo);
    jpeg_set_quality(&cinfo, quality, TRUE);
    jpeg_start_compress(&cinfo, TRUE);
    const std::size_t stride = static_cast<std::size_t>(img.width) * 3;
    while (cinfo.next_scanline < cinfo.image_height) {
        JSAMPROW row = const_cast<JSAMPROW>(img.pixels.data() + stride * cinfo.next_scanline);
        jpeg_write_scanlines(&cinfo, &row, 1);
    }
    jpeg_finish_compress(&cinfo);
    jpeg_destroy_compress(&cinfo);
    if (std::fflush(file.get()) != 0) throw WriteError("flush failed for " + path.string());
}

void save_ppm(const Image& img, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw WriteError("cannot open for writing: " + path.string());
    out << "P6\n" << img.width << " " << img.height << "\n255\n";
    out.write(reinterpret_cast<const char*>(img.pixels.data()),
              static_cast<std::streamsize>(img.pixels.size()));
    if (!out) throw WriteError("short write to " + path.string());
}

}  // namespace dirguide
