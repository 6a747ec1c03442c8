#include "maelab/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <stdexcept>

namespace maelab {

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace

Image load_png(const std::string& path) {
    FilePtr fp(std::fopen(path.c_str(), "rb"));
    if (!fp) throw std::runtime_error("load_png: cannot open " + path);

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw std::runtime_error("load_png: png_create_read_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw std::runtime_error("load_png: png_create_info_struct failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw std::runtime_error("load_png: failed reading " + path);
    }
    png_init_io(png, fp.get());
    png_read_info(png, info);

    const png_uint_32 w = png_get_image_width(png, info);
    const png_uint_32 h = png_get_image_height(png, info);
    const png_byte color = png_get_color_type(png, info);
    png_byte depth = png_get_bit_depth(png, info);

    if (color != PNG_COLOR_TYPE_GRAY && color != PNG_COLOR_TYPE_GRAY_ALPHA) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw std::runtime_error("load_png: " + path + " is not grayscale");
    }
    if (depth < 8) {
        png_set_expand_gray_1_2_4_to_8(png);
        depth = 8;
    }
    if (color == PNG_COLOR_TYPE_GRAY_ALPHA) png_set_strip_alpha(png);
    if (depth == 16) png_set_swap(png);  // stored big-endian in the file
    png_read_update_info(png, info);

    Image img = Image::zeros(h, w, 1);
    const std::size_t bytes_per_px = depth == 16 ? 2 : 1;
    std::vector<png_byte> rowbuf(w * bytes_per_px);
    const float scale = depth == 16 ? 1.0f / 65535.0f : 1.0f / 255.0f;
    for (png_uint_32 y = 0; y < h; ++y) {
        png_read_row(png, rowbuf.data(), nullptr);
        for (png_uint_32 x = 0; x < w; ++x) {
            std::uint32_t v = depth == 16
                                  ? rowbuf[2 * x] | (static_cast<std::uint32_t>(rowbuf[2 * x + 1])
                                                     << 8)
                                  : rowbuf[x];
            img.at(0, y, x) = static_cast<float>(v) * scale;
        }
    }
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return img;
}

void save_png(const std::string& path, const Image& img) {
    if (img.channels != 1 && img.channels != 3)
        throw std::invalid_argument("save_png: expected 1 or 3 channels, got " +
                                    std::to_string(img.channels));
    FilePtr fp(std::fopen(path.c_str(), "wb"));
    if (!fp) throw std::runtime_error("save_png: cannot open " + path);

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw std::runtime_error("save_png: png_create_write_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw std::runtime_error("save_png: png_create_info_struct failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw std::runtime_error("save_png: failed writing " + path);
    }
    png_init_io(png, fp.get());
    png_set_IHDR(png, info, img.width, img.height, 8,
                 img.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);

    std::vector<png_byte> row(img.width * img.channels);
    for (std::size_t y = 0; y < img.height; ++y) {
        for (std::size_t x = 0; x < img.width; ++x)
            for (std::size_t c = 0; c < img.channels; ++c) {
                const float v = std::clamp(img.at(c, y, x), 0.0f, 1.0f);
                row[x * img.channels + c] = static_cast<png_byte>(std::lround(v * 255.0f));
            }
        png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

Image resize_bilinear(const Image& img, std::size_t out_h, std::size_t out_w) {
    if (out_h == 0 || out_w == 0)
        throw std::invalid_argument("resize_bilinear: zero output size");
    if (out_h == img.height && out_w == img.width) return img;

    Image out = Image::zeros(out_h, out_w, img.channels);
    const double sy = static_cast<double>(img.height) / out_h;
    const double sx = static_cast<double>(img.width) / out_w;
    for (std::size_t c = 0; c < img.channels; ++c)
        for (std::size_t y = 0; y < out_h; ++y) {
            // align pixel centers
            const double fy = std::max(0.0, (y + 0.5) * sy - 0.5);
            const std::size_t y0 = std::min(static_cast<std::size_t>(fy), img.height - 1);
            const std::size_t y1 = std::min(y0 + 1, img.height - 1);
            const float wy = static_cast<float>(fy - y0);
            for (std::size_t x = 0; x < out_w; ++x) {
                const double fx = std::max(0.0, (x + 0.5) * sx - 0.5);
                const std::size_t x0 = std::min(static_cast<std::size_t>(fx), img.width - 1);
                const std::size_t x1 = std::min(x0 + 1, img.width - 1);
                const float wx = static_cast<float>(fx - x0);
                const float top = img.at(c, y0, x0) * (1 - wx) + img.at(c, y0, x1) * wx;
                const float bot = img.at(c, y1, x0) * (1 - wx) + img.at(c, y1, x1) * wx;
                out.at(c, y, x) = top * (1 - wy) + bot * wy;
            }
        }
    return out;
}

Image replicate3(const Image& img) {
    if (img.channels == 3) return img;
    if (img.channels != 1)
        throw std::invalid_argument("replicate3: expected 1 or 3 channels, got " +
                                    std::to_string(img.channels));
    Image out = Image::zeros(img.height, img.width, 3);
    for (std::size_t c = 0; c < 3; ++c)
        std::copy(img.data.begin(), img.data.end(), out.data.begin() + c * img.pixels());
    return out;
}

Tensor to_tensor(const std::vector<Image>& batch) {
    if (batch.empty()) throw std::invalid_argument("to_tensor: empty batch");
    const std::size_t C = batch[0].channels, H = batch[0].height, W = batch[0].width;
    std::vector<float> data;
    data.reserve(batch.size() * C * H * W);
    for (const auto& img : batch) {
        if (img.channels != C || img.height != H || img.width != W)
            throw std::invalid_argument("to_tensor: mixed image shapes in batch");
        data.insert(data.end(), img.data.begin(), img.data.end());
    }
    return Tensor::from_data({batch.size(), C, H, W}, std::move(data));
}

Image from_tensor(const Tensor& images, std::size_t batch_index) {
    const Shape& s = images.shape();
    if (s.size() != 4 || batch_index >= s[0])
        throw std::invalid_argument("from_tensor: bad shape " + shape_str(s) + " or index");
    Image img = Image::zeros(s[2], s[3], s[1]);
    const std::size_t stride = s[1] * s[2] * s[3];
    std::copy(images.data().begin() + batch_index * stride,
              images.data().begin() + (batch_index + 1) * stride, img.data.begin());
    return img;
}

namespace {
constexpr char kGridMagic[4] = {'M', 'H', 'G', '1'};
}

void write_float_grid(const std::string& path, std::size_t h, std::size_t w,
                      const std::vector<float>& values) {
    if (values.size() != h * w)
        throw std::invalid_argument("write_float_grid: " + std::to_string(values.size()) +
                                    " values for " + std::to_string(h) + "x" + std::to_string(w));
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("write_float_grid: cannot open " + path);
    std::uint32_t dtype = 1, hh = static_cast<std::uint32_t>(h), ww = static_cast<std::uint32_t>(w);
    out.write(kGridMagic, 4);
    out.write(reinterpret_cast<const char*>(&dtype), 4);
    out.write(reinterpret_cast<const char*>(&hh), 4);
    out.write(reinterpret_cast<const char*>(&ww), 4);
    out.write(reinterpret_cast<const char*>(values.data()),
              static_cast<std::streamsize>(values.size() * sizeof(float)));
    if (!out) throw std::runtime_error("write_float_grid: write failed for " + path);
}

std::vector<float> read_float_grid(const std::string& path, std::size_t& h, std::size_t& w) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("read_float_grid: cannot open " + path);
    char magic[4];
    std::uint32_t dtype = 0, hh = 0, ww = 0;
    in.read(magic, 4);
    in.read(reinterpret_cast<char*>(&dtype), 4);
    in.read(reinterpret_cast<char*>(&hh), 4);
    in.read(reinterpret_cast<char*>(&ww), 4);
    if (!in || std::memcmp(magic, kGridMagic, 4) != 0 || dtype != 1)
        throw std::runtime_error("read_float_grid: bad header in " + path);
    h = hh;
    w = ww;
    std::vector<float> values(h * w);
    in.read(reinterpret_cast<char*>(values.data()),
            static_cast<std::streamsize>(values.size() * sizeof(float)));
    if (!in) throw std::runtime_error("read_float_grid: truncated payload in " + path);
    return values;
}

}  // namespace maelab
