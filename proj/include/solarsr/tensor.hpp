#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <string>
#include <vector>

#include "solarsr/error.hpp"

namespace solarsr {

/// NCHW shape.
struct Shape {
    std::size_t n = 1;
    std::size_t c = 1;
    std::size_t h = 1;
    std::size_t w = 1;

    [[nodiscard]] std::size_t count() const noexcept { return n * c * h * w; }
    [[nodiscard]] std::string str() const {
        return "(" + std::to_string(n) + ", " + std::to_string(c) + ", " + std::to_string(h) + ", " + std::to_string(w) + ")";
    }
    friend bool operator==(const Shape&, const Shape&) = default;
};

/// Dense float32 NCHW array.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, float fill = 0.0f) : shape_(shape), data_(shape.count(), fill) {}
    Tensor(Shape shape, std::vector<float> data) : shape_(shape), data_(std::move(data)) {
        require(data_.size() == shape_.count(), ErrorCode::ShapeMismatch,
                "tensor data length " + std::to_string(data_.size()) + " does not match shape " + shape_.str());
    }

    [[nodiscard]] const Shape& shape() const noexcept { return shape_; }
    [[nodiscard]] std::size_t size() const noexcept { return data_.size(); }
    [[nodiscard]] std::vector<float>& data() noexcept { return data_; }
    [[nodiscard]] const std::vector<float>& data() const noexcept { return data_; }

    [[nodiscard]] float& at(std::size_t n, std::size_t c, std::size_t y, std::size_t x) {
        return data_[((n * shape_.c + c) * shape_.h + y) * shape_.w + x];
    }
    [[nodiscard]] float at(std::size_t n, std::size_t c, std::size_t y, std::size_t x) const {
        return data_[((n * shape_.c + c) * shape_.h + y) * shape_.w + x];
    }

    [[nodiscard]] float* channel(std::size_t n, std::size_t c) { return data_.data() + (n * shape_.c + c) * shape_.h * shape_.w; }
    [[nodiscard]] const float* channel(std::size_t n, std::size_t c) const {
        return data_.data() + (n * shape_.c + c) * shape_.h * shape_.w;
    }

    [[nodiscard]] bool all_finite() const {
        for (float v : data_) {
            if (!std::isfinite(v)) return false;
        }
        return true;
    }

    friend bool operator==(const Tensor&, const Tensor&) = default;

private:
    Shape shape_{};
    std::vector<float> data_;
};

}  // namespace solarsr
