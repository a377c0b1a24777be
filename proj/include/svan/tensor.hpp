#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace svan {

/// Dense (n, c, h, w) array of doubles, row-major with w fastest.
struct Shape {
    std::size_t n = 1;
    std::size_t c = 1;
    std::size_t h = 1;
    std::size_t w = 1;

    std::size_t numel() const { return n * c * h * w; }
    std::size_t plane() const { return h * w; }
    bool operator==(const Shape&) const = default;
    std::string str() const;
};

class Tensor4 {
public:
    Tensor4() = default;
    explicit Tensor4(Shape shape, double fill = 0.0);
    Tensor4(Shape shape, std::vector<double> data);

    static Tensor4 zeros(Shape shape) { return Tensor4(shape, 0.0); }
    static Tensor4 ones(Shape shape) { return Tensor4(shape, 1.0); }
    /// Convenience for scalars and short vectors in tests: shape (1, values.size(), 1, 1).
    static Tensor4 vector(std::vector<double> values);
    static Tensor4 scalar(double value) { return Tensor4(Shape{1, 1, 1, 1}, value); }

    const Shape& shape() const { return shape_; }
    std::size_t n() const { return shape_.n; }
    std::size_t c() const { return shape_.c; }
    std::size_t h() const { return shape_.h; }
    std::size_t w() const { return shape_.w; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    std::span<double> data() { return data_; }
    std::span<const double> data() const { return data_; }
    double* raw() { return data_.data(); }
    const double* raw() const { return data_.data(); }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    std::size_t index(std::size_t n, std::size_t c, std::size_t y, std::size_t x) const {
        return ((n * shape_.c + c) * shape_.h + y) * shape_.w + x;
    }
    double& at(std::size_t n, std::size_t c, std::size_t y, std::size_t x) {
        return data_[index(n, c, y, x)];
    }
    double at(std::size_t n, std::size_t c, std::size_t y, std::size_t x) const {
        return data_[index(n, c, y, x)];
    }

    /// Pointer to the (h, w) plane of sample n, channel c.
    double* plane(std::size_t n, std::size_t c) { return data_.data() + (n * shape_.c + c) * shape_.plane(); }
    const double* plane(std::size_t n, std::size_t c) const {
        return data_.data() + (n * shape_.c + c) * shape_.plane();
    }

    double item() const;
    double sum() const;
    bool all_finite() const;
    void fill(double value);

    /// Elementwise equality of shape and bits.
    bool bitwise_equal(const Tensor4& other) const;

private:
    Shape shape_{};
    std::vector<double> data_;
};

/// Name-keyed tensor collection; iteration order is the lexicographic name order.
using NamedTensors = std::map<std::string, Tensor4>;

double max_abs_diff(const Tensor4& a, const Tensor4& b);

/// Fixture dump: four little-endian u32 dims (n, c, h, w) then n*c*h*w little-endian f64.
void write_tensor(const Tensor4& t, const std::filesystem::path& path);
Tensor4 read_tensor(const std::filesystem::path& path);

}  // namespace svan
