#include "holmes/image.hpp"

#include "holmes/error.hpp"
#include "holmes/rng.hpp"

#include <jpeglib.h>
#include <png.h>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <numbers>

namespace holmes {

Image::Image(int width, int height, Rgb fill) : width_(width), height_(height) {
    if (width < 0 || height < 0) throw ValidationError("image: negative dimensions");
    data_.resize(pixel_count() * 3);
    for (std::size_t i = 0; i < pixel_count(); ++i) {
        data_[3 * i] = fill.r;
        data_[3 * i + 1] = fill.g;
        data_[3 * i + 2] = fill.b;
    }
}

namespace {

std::uint8_t clamp_u8(double v) {
    return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
}

// ---- PNG ----------------------------------------------------------------

struct PngReadCursor {
    std::span<const std::uint8_t> data;
    std::size_t pos = 0;
};

void png_read_mem(png_structp png, png_bytep out, png_size_t n) {
    auto* cur = static_cast<PngReadCursor*>(png_get_io_ptr(png));
    if (cur->pos + n > cur->data.size()) png_error(png, "truncated PNG stream");
    std::memcpy(out, cur->data.data() + cur->pos, n);
    cur->pos += n;
}

void png_write_mem(png_structp png, png_bytep in, png_size_t n) {
    auto* out = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(png));
    out->insert(out->end(), in, in + n);
}

void png_flush_mem(png_structp) {}

Image decode_png(std::span<const std::uint8_t> encoded) {
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (png == nullptr) throw ParseError("png: cannot allocate reader");
    png_infop info = png_create_info_struct(png);
    PngReadCursor cursor{encoded, 0};
    Image image;
    std::vector<png_bytep> rows;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw ParseError("png: malformed stream");
    }
    png_set_read_fn(png, &cursor, png_read_mem);
    png_read_info(png, info);
    png_set_expand(png);
    png_set_strip_16(png);
    png_set_strip_alpha(png);
    png_set_gray_to_rgb(png);
    png_set_packing(png);
    png_read_update_info(png, info);
    const int w = static_cast<int>(png_get_image_width(png, info));
    const int h = static_cast<int>(png_get_image_height(png, info));
    if (png_get_rowbytes(png, info) != static_cast<std::size_t>(w) * 3) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw ParseError("png: unsupported pixel layout");
    }
    image = Image(w, h);
    rows.resize(h);
    for (int y = 0; y < h; ++y) rows[y] = image.bytes().data() + static_cast<std::size_t>(y) * w * 3;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return image;
}

std::vector<std::uint8_t> encode_png_raw(int width, int height, int color_type, int bit_depth,
                                         const std::vector<std::vector<std::uint8_t>>& rows) {
    std::vector<std::uint8_t> out;
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (png == nullptr) throw PipelineError("png: cannot allocate writer");
    png_infop info = png_create_info_struct(png);
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw PipelineError("png: encoding failed");
    }
    png_set_write_fn(png, &out, png_write_mem, png_flush_mem);
    png_set_compression_level(png, 6);
    png_set_filter(png, PNG_FILTER_TYPE_BASE, PNG_FILTER_NONE);
    png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), bit_depth,
                 color_type, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (const auto& row : rows) png_write_row(png, row.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    return out;
}

// ---- JPEG ---------------------------------------------------------------

struct JpegError {
    jpeg_error_mgr mgr;
    std::jmp_buf jump;
};

void jpeg_error_exit(j_common_ptr cinfo) {
    auto* err = reinterpret_cast<JpegError*>(cinfo->err);
    std::longjmp(err->jump, 1);
}

Image decode_jpeg(std::span<const std::uint8_t> encoded) {
    jpeg_decompress_struct cinfo{};
    JpegError err{};
    cinfo.err = jpeg_std_error(&err.mgr);
    err.mgr.error_exit = jpeg_error_exit;
    Image image;
    if (setjmp(err.jump)) {
        jpeg_destroy_decompress(&cinfo);
        throw ParseError("jpeg: malformed stream");
    }
    jpeg_create_decompress(&cinfo);
    jpeg_mem_src(&cinfo, encoded.data(), static_cast<unsigned long>(encoded.size()));
    jpeg_read_header(&cinfo, TRUE);
    cinfo.out_color_space = JCS_RGB;
    cinfo.dct_method = JDCT_ISLOW;
    jpeg_start_decompress(&cinfo);
    image = Image(static_cast<int>(cinfo.output_width), static_cast<int>(cinfo.output_height));
    while (cinfo.output_scanline < cinfo.output_height) {
        JSAMPROW row = image.bytes().data() + static_cast<std::size_t>(cinfo.output_scanline) * image.width() * 3;
        jpeg_read_scanlines(&cinfo, &row, 1);
    }
    jpeg_finish_decompress(&cinfo);
    jpeg_destroy_decompress(&cinfo);
    return image;
}

}  // namespace

Image decode_image(std::span<const std::uint8_t> encoded) {
    static constexpr std::uint8_t kPng[] = {0x89, 'P', 'N', 'G'};
    if (encoded.size() >= 4 && std::equal(kPng, kPng + 4, encoded.begin())) return decode_png(encoded);
    if (encoded.size() >= 3 && encoded[0] == 0xFF && encoded[1] == 0xD8 && encoded[2] == 0xFF) {
        return decode_jpeg(encoded);
    }
    throw ParseError("image: unrecognised format (expected PNG or JPEG)");
}

Image read_image(const std::string& path) {
    auto bytes = read_file(path);
    try {
        return decode_image(bytes);
    } catch (const ParseError& e) {
        throw ParseError(path + ": " + e.what());
    }
}

std::vector<std::uint8_t> encode_png(const Image& image) {
    std::vector<std::vector<std::uint8_t>> rows(image.height());
    const auto bytes = image.bytes();
    const std::size_t stride = static_cast<std::size_t>(image.width()) * 3;
    for (int y = 0; y < image.height(); ++y) {
        rows[y].assign(bytes.begin() + y * stride, bytes.begin() + (y + 1) * stride);
    }
    return encode_png_raw(image.width(), image.height(), PNG_COLOR_TYPE_RGB, 8, rows);
}

std::vector<std::uint8_t> encode_png_gray(int width, int height, std::span<const std::uint8_t> values) {
    if (values.size() != static_cast<std::size_t>(width) * height) {
        throw ValidationError("png: gray buffer size mismatch");
    }
    std::vector<std::vector<std::uint8_t>> rows(height);
    for (int y = 0; y < height; ++y) rows[y].assign(values.begin() + y * width, values.begin() + (y + 1) * width);
    return encode_png_raw(width, height, PNG_COLOR_TYPE_GRAY, 8, rows);
}

std::vector<std::uint8_t> encode_png_mask(int width, int height, const std::vector<bool>& bits) {
    if (bits.size() != static_cast<std::size_t>(width) * height) {
        throw ValidationError("png: mask size mismatch");
    }
    std::vector<std::vector<std::uint8_t>> rows(height, std::vector<std::uint8_t>((width + 7) / 8, 0));
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            if (bits[static_cast<std::size_t>(y) * width + x]) rows[y][x / 8] |= static_cast<std::uint8_t>(0x80 >> (x % 8));
        }
    }
    return encode_png_raw(width, height, PNG_COLOR_TYPE_GRAY, 1, rows);
}

std::vector<std::uint8_t> encode_jpeg(const Image& image, int quality) {
    jpeg_compress_struct cinfo{};
    JpegError err{};
    cinfo.err = jpeg_std_error(&err.mgr);
    err.mgr.error_exit = jpeg_error_exit;
    unsigned char* buffer = nullptr;
    unsigned long size = 0;
    if (setjmp(err.jump)) {
        jpeg_destroy_compress(&cinfo);
        std::free(buffer);
        throw PipelineError("jpeg: encoding failed");
    }
    jpeg_create_compress(&cinfo);
    jpeg_mem_dest(&cinfo, &buffer, &size);
    cinfo.image_width = static_cast<JDIMENSION>(image.width());
    cinfo.image_height = static_cast<JDIMENSION>(image.height());
    cinfo.input_components = 3;
    cinfo.in_color_space = JCS_RGB;
    jpeg_set_defaults(&cinfo);
    jpeg_set_quality(&cinfo, std::clamp(quality, 1, 100), TRUE);
    jpeg_start_compress(&cinfo, TRUE);
    std::vector<std::uint8_t> row(static_cast<std::size_t>(image.width()) * 3);
    const auto bytes = image.bytes();
    while (cinfo.next_scanline < cinfo.image_height) {
        std::copy_n(bytes.begin() + cinfo.next_scanline * row.size(), row.size(), row.begin());
        JSAMPROW ptr = row.data();
        jpeg_write_scanlines(&cinfo, &ptr, 1);
    }
    jpeg_finish_compress(&cinfo);
    std::vector<std::uint8_t> out(buffer, buffer + size);
    jpeg_destroy_compress(&cinfo);
    std::free(buffer);
    return out;
}

void write_file(const std::string& path, std::span<const std::uint8_t> bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw PipelineError("cannot write '" + path + "'");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw PipelineError("short write to '" + path + "'");
}

std::vector<std::uint8_t> read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open '" + path + "'");
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// ---- pixel ops ------------------------------------------------------------

Image crop(const Image& image, const BBox& box) {
    if (!box.inside(image.width(), image.height())) throw ValidationError("crop: box outside image");
    Image out(box.width(), box.height());
    for (int y = 0; y < box.height(); ++y) {
        for (int x = 0; x < box.width(); ++x) out.set(x, y, image.get(box.x_min + x, box.y_min + y));
    }
    return out;
}

Image resize_bilinear(const Image& image, int width, int height) {
    if (image.empty() || width <= 0 || height <= 0) throw ValidationError("resize: empty geometry");
    if (width == image.width() && height == image.height()) return image;
    Image out(width, height);
    const double sx = static_cast<double>(image.width()) / width;
    const double sy = static_cast<double>(image.height()) / height;
    for (int y = 0; y < height; ++y) {
        double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, image.height() - 1.0);
        int y0 = static_cast<int>(fy);
        int y1 = std::min(y0 + 1, image.height() - 1);
        double wy = fy - y0;
        for (int x = 0; x < width; ++x) {
            double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, image.width() - 1.0);
            int x0 = static_cast<int>(fx);
            int x1 = std::min(x0 + 1, image.width() - 1);
            double wx = fx - x0;
            Rgb px;
            for (int c = 0; c < 3; ++c) {
                double top = image.channel(x0, y0, c) * (1 - wx) + image.channel(x1, y0, c) * wx;
                double bot = image.channel(x0, y1, c) * (1 - wx) + image.channel(x1, y1, c) * wx;
                (&px.r)[c] = clamp_u8(top * (1 - wy) + bot * wy);
            }
            out.set(x, y, px);
        }
    }
    return out;
}

Image hflip(const Image& image) {
    Image out(image.width(), image.height());
    for (int y = 0; y < image.height(); ++y) {
        for (int x = 0; x < image.width(); ++x) out.set(image.width() - 1 - x, y, image.get(x, y));
    }
    return out;
}

Image warp_affine(const Image& image, const std::array<double, 6>& inv, Rgb fill) {
    Image out(image.width(), image.height());
    const int w = image.width();
    const int h = image.height();
    auto sample = [&](int x, int y, int c) -> double {
        if (x < 0 || y < 0 || x >= w || y >= h) return (&fill.r)[c];
        return image.channel(x, y, c);
    };
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const double sx = inv[0] * x + inv[1] * y + inv[2];
            const double sy = inv[3] * x + inv[4] * y + inv[5];
            const int x0 = static_cast<int>(std::floor(sx));
            const int y0 = static_cast<int>(std::floor(sy));
            const double wx = sx - x0;
            const double wy = sy - y0;
            Rgb px;
            for (int c = 0; c < 3; ++c) {
                double top = sample(x0, y0, c) * (1 - wx) + sample(x0 + 1, y0, c) * wx;
                double bot = sample(x0, y0 + 1, c) * (1 - wx) + sample(x0 + 1, y0 + 1, c) * wx;
                (&px.r)[c] = clamp_u8(top * (1 - wy) + bot * wy);
            }
            out.set(x, y, px);
        }
    }
    return out;
}

Image rotate_shear(const Image& image, double rotation_deg, double shear_deg, Rgb fill) {
    // Forward map about the centre: p' = R * S * (p - c) + c. We need its inverse.
    const double th = rotation_deg * std::numbers::pi / 180.0;
    const double sh = std::tan(shear_deg * std::numbers::pi / 180.0);
    const double cx = (image.width() - 1) / 2.0;
    const double cy = (image.height() - 1) / 2.0;
    // M = R * S with S = [[1, sh], [0, 1]].
    const double a = std::cos(th), b = std::cos(th) * sh - std::sin(th);
    const double c = std::sin(th), d = std::sin(th) * sh + std::cos(th);
    const double det = a * d - b * c;
    const double ia = d / det, ib = -b / det, ic = -c / det, id = a / det;
    return warp_affine(image, {ia, ib, cx - ia * cx - ib * cy, ic, id, cy - ic * cx - id * cy}, fill);
}

Image gaussian_blur(const Image& image, double sigma) {
    if (sigma <= 0) return image;
    const int radius = std::max(1, static_cast<int>(std::ceil(3 * sigma)));
    std::vector<double> kernel(2 * radius + 1);
    double sum = 0;
    for (int i = -radius; i <= radius; ++i) sum += kernel[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
    for (auto& k : kernel) k /= sum;

    const int w = image.width(), h = image.height();
    std::vector<double> tmp(static_cast<std::size_t>(w) * h * 3);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            for (int c = 0; c < 3; ++c) {
                double acc = 0;
                for (int i = -radius; i <= radius; ++i) {
                    acc += kernel[i + radius] * image.channel(std::clamp(x + i, 0, w - 1), y, c);
                }
                tmp[(static_cast<std::size_t>(y) * w + x) * 3 + c] = acc;
            }
        }
    }
    Image out(w, h);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            Rgb px;
            for (int c = 0; c < 3; ++c) {
                double acc = 0;
                for (int i = -radius; i <= radius; ++i) {
                    acc += kernel[i + radius] * tmp[(static_cast<std::size_t>(std::clamp(y + i, 0, h - 1)) * w + x) * 3 + c];
                }
                (&px.r)[c] = clamp_u8(acc);
            }
            out.set(x, y, px);
        }
    }
    return out;
}

Image emboss(const Image& image, double strength, double alpha) {
    const double k[3][3] = {{-1 - strength, -strength, 0}, {-strength, 1, strength}, {0, strength, 1 + strength}};
    const int w = image.width(), h = image.height();
    Image out(w, h);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            Rgb px;
            for (int c = 0; c < 3; ++c) {
                double acc = 0;
                for (int dy = -1; dy <= 1; ++dy) {
                    for (int dx = -1; dx <= 1; ++dx) {
                        acc += k[dy + 1][dx + 1] *
                               image.channel(std::clamp(x + dx, 0, w - 1), std::clamp(y + dy, 0, h - 1), c);
                    }
                }
                (&px.r)[c] = clamp_u8((1.0 - alpha) * image.channel(x, y, c) + alpha * acc);
            }
            out.set(x, y, px);
        }
    }
    return out;
}

Image add_gaussian_noise(const Image& image, double sigma, Rng& rng) {
    Image out = image;
    for (auto& v : out.bytes()) v = clamp_u8(v + sigma * rng.normal());
    return out;
}

Image color_jitter(const Image& image, double brightness, double contrast, double saturation) {
    const auto y = luma(image);
    double mean = 0;
    for (double v : y) mean += v;
    mean /= std::max<std::size_t>(1, y.size());
    Image out(image.width(), image.height());
    for (int py = 0; py < image.height(); ++py) {
        for (int px = 0; px < image.width(); ++px) {
            const double gray = y[static_cast<std::size_t>(py) * image.width() + px];
            Rgb o;
            for (int c = 0; c < 3; ++c) {
                double v = image.channel(px, py, c) * brightness;
                v = (v - mean * brightness) * contrast + mean * brightness;
                v = gray * brightness + (v - gray * brightness) * saturation;
                (&o.r)[c] = clamp_u8(v);
            }
            out.set(px, py, o);
        }
    }
    return out;
}

Image to_grayscale(const Image& image) {
    const auto y = luma(image);
    Image out(image.width(), image.height());
    for (std::size_t i = 0; i < y.size(); ++i) {
        const auto g = clamp_u8(y[i]);
        out.set(static_cast<int>(i % image.width()), static_cast<int>(i / image.width()), {g, g, g});
    }
    return out;
}

std::vector<double> luma(const Image& image) {
    std::vector<double> out(image.pixel_count());
    const auto bytes = image.bytes();
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = 0.299 * bytes[3 * i] + 0.587 * bytes[3 * i + 1] + 0.114 * bytes[3 * i + 2];
    }
    return out;
}

}  // namespace holmes
