#include "holmes/tensor.hpp"

#include "holmes/error.hpp"
#include "holmes/image.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <functional>
#include <numeric>

namespace holmes {

namespace {

constexpr std::uint8_t kDtypeFloat32 = 1;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(std::span<const std::uint8_t> b, std::size_t at) {
    return static_cast<std::uint32_t>(b[at]) | static_cast<std::uint32_t>(b[at + 1]) << 8 |
           static_cast<std::uint32_t>(b[at + 2]) << 16 | static_cast<std::uint32_t>(b[at + 3]) << 24;
}

}  // namespace

std::size_t shape_volume(const std::vector<std::size_t>& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

Tensor::Tensor(std::vector<std::size_t> shape, float fill)
    : shape_(std::move(shape)), data_(shape_volume(shape_), fill) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<float> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != shape_volume(shape_)) {
        throw ValidationError("tensor: data length " + std::to_string(data_.size()) + " does not match shape " +
                              shape_string());
    }
}

bool Tensor::all_finite() const {
    for (float v : data_) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

std::string Tensor::shape_string() const {
    std::string s = "[";
    for (std::size_t i = 0; i < shape_.size(); ++i) s += (i ? "x" : "") + std::to_string(shape_[i]);
    return s + "]";
}

std::vector<std::uint8_t> encode_htf(const Tensor& t) {
    if (t.rank() > 255) throw ValidationError("htf: rank exceeds 255");
    std::vector<std::uint8_t> out = {'H', 'T', 'F', '1', kDtypeFloat32, static_cast<std::uint8_t>(t.rank()), 0, 0};
    for (auto d : t.shape()) {
        if (d > UINT32_MAX) throw ValidationError("htf: dimension exceeds uint32");
        put_u32(out, static_cast<std::uint32_t>(d));
    }
    out.reserve(out.size() + 4 * t.size());
    for (float v : t.data()) put_u32(out, std::bit_cast<std::uint32_t>(v));
    return out;
}

Tensor decode_htf(std::span<const std::uint8_t> b) {
    if (b.size() < 8 || std::memcmp(b.data(), "HTF1", 4) != 0) throw ParseError("htf: bad magic");
    if (b[4] != kDtypeFloat32) throw ParseError("htf: unsupported dtype code " + std::to_string(b[4]));
    const std::size_t rank = b[5];
    if (b[6] != 0 || b[7] != 0) throw ParseError("htf: reserved bytes must be zero");
    std::size_t at = 8;
    if (b.size() < at + 4 * rank) throw ParseError("htf: truncated header");
    std::vector<std::size_t> shape(rank);
    for (auto& d : shape) {
        d = get_u32(b, at);
        at += 4;
    }
    const std::size_t n = shape_volume(shape);
    if (b.size() != at + 4 * n) throw ParseError("htf: payload size does not match shape");
    std::vector<float> data(n);
    for (auto& v : data) {
        v = std::bit_cast<float>(get_u32(b, at));
        at += 4;
    }
    return Tensor(std::move(shape), std::move(data));
}

void save_htf(const std::string& path, const Tensor& t) { write_file(path, encode_htf(t)); }

Tensor load_htf(const std::string& path) {
    try {
        return decode_htf(read_file(path));
    } catch (const ParseError& e) {
        throw ParseError(path + ": " + e.what());
    }
}

}  // namespace holmes
