#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace holmes {

// Dense float32 tensor, row-major.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<std::size_t> shape, float fill = 0.0f);
    Tensor(std::vector<std::size_t> shape, std::vector<float> data);

    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t dim(std::size_t i) const { return shape_.at(i); }
    std::size_t size() const { return data_.size(); }

    std::span<float> data() { return data_; }
    std::span<const float> data() const { return data_; }
    std::vector<float>& values() { return data_; }
    const std::vector<float>& values() const { return data_; }

    float& operator[](std::size_t i) { return data_[i]; }
    float operator[](std::size_t i) const { return data_[i]; }

    // Element of a rank-3 tensor (channel, row, col).
    float& at(std::size_t c, std::size_t y, std::size_t x) { return data_[(c * shape_[1] + y) * shape_[2] + x]; }
    float at(std::size_t c, std::size_t y, std::size_t x) const { return data_[(c * shape_[1] + y) * shape_[2] + x]; }

    bool all_finite() const;
    std::string shape_string() const;

    bool operator==(const Tensor&) const = default;

private:
    std::vector<std::size_t> shape_;
    std::vector<float> data_;
};

std::size_t shape_volume(const std::vector<std::size_t>& shape);

// HTF1 container: "HTF1", dtype byte (1 = float32), rank byte, two reserved
// zero bytes, rank little-endian uint32 dims, then the little-endian payload.
std::vector<std::uint8_t> encode_htf(const Tensor& t);
Tensor decode_htf(std::span<const std::uint8_t> bytes);
void save_htf(const std::string& path, const Tensor& t);
Tensor load_htf(const std::string& path);

}  // namespace holmes
