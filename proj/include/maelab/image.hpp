#pragma once

#include <string>
#include <vector>

#include "maelab/tensor.hpp"

namespace maelab {

// Planar float image, values nominally in [0,1] before normalization.
struct Image {
    std::size_t height = 0;
    std::size_t width = 0;
    std::size_t channels = 1;
    std::vector<float> data;  // [C, H, W] row-major

    static Image zeros(std::size_t h, std::size_t w, std::size_t c = 1) {
        return {h, w, c, std::vector<float>(h * w * c, 0.0f)};
    }
    float& at(std::size_t c, std::size_t y, std::size_t x) {
        return data[(c * height + y) * width + x];
    }
    float at(std::size_t c, std::size_t y, std::size_t x) const {
        return data[(c * height + y) * width + x];
    }
    std::size_t pixels() const { return height * width; }
};

// 8- or 16-bit grayscale PNG -> floats in [0,1]. Throws on other layouts.
Image load_png(const std::string& path);
// Writes 8-bit PNG; grayscale for 1 channel, RGB for 3. Values clamped to [0,1].
void save_png(const std::string& path, const Image& img);

Image resize_bilinear(const Image& img, std::size_t out_h, std::size_t out_w);

// Gray -> 3 identical channels; 3-channel input passes through.
Image replicate3(const Image& img);

// Stacks normalized images into a [B, C, H, W] tensor.
Tensor to_tensor(const std::vector<Image>& batch);
Image from_tensor(const Tensor& images, std::size_t batch_index);

// Raw float grid with a 16-byte header: magic "MHG1", u32 dtype code (1 =
// f32), u32 height, u32 width, then little-endian f32 payload.
void write_float_grid(const std::string& path, std::size_t h, std::size_t w,
                      const std::vector<float>& values);
std::vector<float> read_float_grid(const std::string& path, std::size_t& h, std::size_t& w);

}  // namespace maelab
