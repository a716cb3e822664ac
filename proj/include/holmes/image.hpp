#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace holmes {

class Rng;

struct Rgb {
    std::uint8_t r = 0, g = 0, b = 0;
    bool operator==(const Rgb&) const = default;
};

// Raw-RGB gray used for ablation, padding and curve baselines (ImageNet mean).
inline constexpr Rgb kAblationFill{124, 116, 104};

// 8-bit interleaved RGB image, row-major.
class Image {
public:
    Image() = default;
    Image(int width, int height, Rgb fill = {});

    int width() const { return width_; }
    int height() const { return height_; }
    std::size_t pixel_count() const { return static_cast<std::size_t>(width_) * height_; }
    bool empty() const { return pixel_count() == 0; }

    Rgb get(int x, int y) const {
        const auto* p = &data_[offset(x, y)];
        return {p[0], p[1], p[2]};
    }
    void set(int x, int y, Rgb c) {
        auto* p = &data_[offset(x, y)];
        p[0] = c.r;
        p[1] = c.g;
        p[2] = c.b;
    }
    std::uint8_t channel(int x, int y, int c) const { return data_[offset(x, y) + c]; }

    std::span<const std::uint8_t> bytes() const { return data_; }
    std::span<std::uint8_t> bytes() { return data_; }

    bool operator==(const Image&) const = default;

private:
    std::size_t offset(int x, int y) const { return (static_cast<std::size_t>(y) * width_ + x) * 3; }

    int width_ = 0;
    int height_ = 0;
    std::vector<std::uint8_t> data_;
};

// Half-open pixel rectangle [x_min, x_max) x [y_min, y_max).
struct BBox {
    int x_min = 0, y_min = 0, x_max = 0, y_max = 0;

    int width() const { return x_max - x_min; }
    int height() const { return y_max - y_min; }
    bool valid() const { return x_min < x_max && y_min < y_max; }
    bool inside(int w, int h) const { return valid() && x_min >= 0 && y_min >= 0 && x_max <= w && y_max <= h; }
    bool contains(int x, int y) const { return x >= x_min && x < x_max && y >= y_min && y < y_max; }
    bool intersects(const BBox& o) const {
        return x_min < o.x_max && o.x_min < x_max && y_min < o.y_max && o.y_min < y_max;
    }
    bool operator==(const BBox&) const = default;
};

// --- file formats ---------------------------------------------------------

// Decodes PNG or JPEG (sniffed from the signature) into RGB.
Image decode_image(std::span<const std::uint8_t> encoded);
Image read_image(const std::string& path);

// PNG writers use fixed zlib settings and no timestamp chunk, so equal input
// always produces byte-identical files.
std::vector<std::uint8_t> encode_png(const Image& image);
std::vector<std::uint8_t> encode_png_gray(int width, int height, std::span<const std::uint8_t> values);
std::vector<std::uint8_t> encode_png_mask(int width, int height, const std::vector<bool>& bits);
std::vector<std::uint8_t> encode_jpeg(const Image& image, int quality);

void write_file(const std::string& path, std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> read_file(const std::string& path);

// --- pixel operations -----------------------------------------------------

Image crop(const Image& image, const BBox& box);
Image resize_bilinear(const Image& image, int width, int height);
Image hflip(const Image& image);

// Inverse-mapped affine warp with bilinear sampling; `inverse` maps output
// (x, y, 1) to source coordinates. Samples outside the source take `fill`.
Image warp_affine(const Image& image, const std::array<double, 6>& inverse, Rgb fill);
Image rotate_shear(const Image& image, double rotation_deg, double shear_deg, Rgb fill);

Image gaussian_blur(const Image& image, double sigma);
// 3x3 emboss of the given strength, alpha-blended with the input.
Image emboss(const Image& image, double strength = 1.0, double alpha = 1.0);
Image add_gaussian_noise(const Image& image, double sigma, Rng& rng);
Image color_jitter(const Image& image, double brightness, double contrast, double saturation);
Image to_grayscale(const Image& image);

// Rec.601 luma of every pixel, row-major.
std::vector<double> luma(const Image& image);

}  // namespace holmes
