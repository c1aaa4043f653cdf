#include "rfcn/image_io.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>

#include "rfcn/error.hpp"

namespace rfcn {

namespace {

int read_pgm_token(std::istream& in, const std::string& path) {
    // Skips whitespace and '#' comments per the netpbm grammar.
    int c = in.get();
    while (c != EOF) {
        if (c == '#') {
            while (c != EOF && c != '\n') c = in.get();
        } else if (!std::isspace(c)) {
            break;
        }
        c = in.get();
    }
    if (c == EOF) throw LoadError("truncated PGM header: " + path);
    int value = 0;
    bool any = false;
    while (c != EOF && std::isdigit(c)) {
        value = value * 10 + (c - '0');
        any = true;
        c = in.get();
    }
    if (!any) throw LoadError("malformed PGM header: " + path);
    return value;
}

}  // namespace

GrayImage read_pgm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw LoadError("cannot open " + path.string());
    char magic[2] = {0, 0};
    in.read(magic, 2);
    if (magic[0] != 'P' || magic[1] != '5') {
        throw LoadError("not a binary PGM (P5): " + path.string());
    }
    GrayImage img;
    img.w = read_pgm_token(in, path.string());
    img.h = read_pgm_token(in, path.string());
    img.maxval = read_pgm_token(in, path.string());
    if (img.w <= 0 || img.h <= 0 || img.maxval <= 0 || img.maxval > 255) {
        throw LoadError("unsupported PGM geometry or maxval: " + path.string());
    }
    img.pixels.resize(static_cast<size_t>(img.w) * img.h);
    in.read(reinterpret_cast<char*>(img.pixels.data()),
            static_cast<std::streamsize>(img.pixels.size()));
    if (in.gcount() != static_cast<std::streamsize>(img.pixels.size())) {
        throw LoadError("truncated PGM data: " + path.string());
    }
    return img;
}

void write_pgm(const std::filesystem::path& path, const GrayImage& img) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << "P5\n" << img.w << " " << img.h << "\n255\n";
    out.write(reinterpret_cast<const char*>(img.pixels.data()),
              static_cast<std::streamsize>(img.pixels.size()));
    if (!out) throw IoError("short write: " + path.string());
}

GrayImage read_png(const std::filesystem::path& path) {
    std::FILE* fp = std::fopen(path.string().c_str(), "rb");
    if (!fp) throw LoadError("cannot open " + path.string());
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        if (png) png_destroy_read_struct(&png, &info, nullptr);
        std::fclose(fp);
        throw LoadError("libpng init failed for " + path.string());
    }
    GrayImage img;
    std::vector<png_bytep> rows;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        std::fclose(fp);
        throw LoadError("malformed PNG: " + path.string());
    }
    png_init_io(png, fp);
    png_read_info(png, info);
    png_set_strip_16(png);
    png_set_expand_gray_1_2_4_to_8(png);
    const int color = png_get_color_type(png, info);
    if (color != PNG_COLOR_TYPE_GRAY) {
        png_destroy_read_struct(&png, &info, nullptr);
        std::fclose(fp);
        throw LoadError("PNG is not 8-bit grayscale: " + path.string());
    }
    png_read_update_info(png, info);
    img.w = static_cast<int>(png_get_image_width(png, info));
    img.h = static_cast<int>(png_get_image_height(png, info));
    img.pixels.resize(static_cast<size_t>(img.w) * img.h);
    rows.resize(static_cast<size_t>(img.h));
    for (int y = 0; y < img.h; ++y) {
        rows[static_cast<size_t>(y)] = img.pixels.data() + static_cast<size_t>(y) * img.w;
    }
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    return img;
}

void write_png(const std::filesystem::path& path, const GrayImage& img) {
    std::FILE* fp = std::fopen(path.string().c_str(), "wb");
    if (!fp) throw IoError("cannot write " + path.string());
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        if (png) png_destroy_write_struct(&png, &info);
        std::fclose(fp);
        throw IoError("libpng init failed for " + path.string());
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        std::fclose(fp);
        throw IoError("PNG write failed: " + path.string());
    }
    png_init_io(png, fp);
    png_set_IHDR(png, info, static_cast<png_uint_32>(img.w), static_cast<png_uint_32>(img.h), 8,
                 PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (int y = 0; y < img.h; ++y) {
        png_write_row(png, const_cast<png_bytep>(img.pixels.data() + static_cast<size_t>(y) * img.w));
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
}

GrayImage read_gray_image(const std::filesystem::path& path) {
    const std::string ext = path.extension().string();
    if (ext == ".pgm") return read_pgm(path);
    if (ext == ".png") return read_png(path);
    throw LoadError("unsupported image extension: " + path.string());
}

void write_gray_image(const std::filesystem::path& path, const GrayImage& img) {
    const std::string ext = path.extension().string();
    if (ext == ".pgm") {
        write_pgm(path, img);
    } else if (ext == ".png") {
        write_png(path, img);
    } else {
        throw IoError("unsupported image extension: " + path.string());
    }
}

Tensor image_to_tensor(const GrayImage& img) {
    Tensor t({1, img.h, img.w});
    const double inv = 1.0 / static_cast<double>(img.maxval);
    for (std::int64_t i = 0; i < t.size(); ++i) {
        t[i] = static_cast<double>(img.pixels[static_cast<size_t>(i)]) * inv;
    }
    return t;
}

GrayImage tensor_to_image(const Tensor& t) {
    if (t.rank() != 2 && !(t.rank() == 3 && t.extent(0) == 1)) {
        throw DimensionError("tensor_to_image: expected HxW or 1xHxW, got " + t.shape_str());
    }
    GrayImage img;
    img.h = t.extent(t.rank() - 2);
    img.w = t.extent(t.rank() - 1);
    img.pixels.resize(static_cast<size_t>(img.h) * img.w);
    for (std::int64_t i = 0; i < t.size(); ++i) {
        const double v = std::min(1.0, std::max(0.0, t[i]));
        img.pixels[static_cast<size_t>(i)] = static_cast<std::uint8_t>(std::lround(v * 255.0));
    }
    return img;
}

std::vector<Tensor> read_idx_images(const std::filesystem::path& path, int limit) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw LoadError("cannot open " + path.string());
    auto read_u32 = [&]() {
        unsigned char b[4];
        in.read(reinterpret_cast<char*>(b), 4);
        if (!in) throw LoadError("truncated IDX header: " + path.string());
        return (static_cast<std::uint32_t>(b[0]) << 24) | (static_cast<std::uint32_t>(b[1]) << 16) |
               (static_cast<std::uint32_t>(b[2]) << 8) | static_cast<std::uint32_t>(b[3]);
    };
    const std::uint32_t magic = read_u32();
    if (magic != 0x00000803u) {
        throw LoadError("bad IDX magic in " + path.string());
    }
    const int n = static_cast<int>(read_u32());
    const int h = static_cast<int>(read_u32());
    const int w = static_cast<int>(read_u32());
    if (n <= 0 || h <= 0 || w <= 0) throw LoadError("bad IDX extents in " + path.string());
    const int count = limit > 0 ? std::min(limit, n) : n;
    std::vector<Tensor> out;
    out.reserve(static_cast<size_t>(count));
    std::vector<std::uint8_t> buf(static_cast<size_t>(h) * w);
    for (int i = 0; i < count; ++i) {
        in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
        if (in.gcount() != static_cast<std::streamsize>(buf.size())) {
            throw LoadError("truncated IDX data: " + path.string());
        }
        Tensor t({h, w});
        for (std::int64_t j = 0; j < t.size(); ++j) {
            t[j] = static_cast<double>(buf[static_cast<size_t>(j)]) / 255.0;
        }
        out.push_back(std::move(t));
    }
    return out;
}

}  // namespace rfcn
