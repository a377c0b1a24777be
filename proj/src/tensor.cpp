#include "svan/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include "binary_io.hpp"
#include "svan/error.hpp"

namespace svan {

std::string_view to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::Dimension: return "dimension error";
        case ErrorKind::Corrupt: return "corrupt file";
        case ErrorKind::Unsupported: return "unsupported input";
        case ErrorKind::Io: return "path error";
        case ErrorKind::Config: return "config error";
        case ErrorKind::Usage: return "usage error";
        case ErrorKind::Numeric: return "numeric error";
    }
    return "error";
}

std::string Shape::str() const {
    return "(" + std::to_string(n) + "," + std::to_string(c) + "," + std::to_string(h) + "," +
           std::to_string(w) + ")";
}

namespace {

void check_dims(const Shape& s) {
    if (s.n == 0 || s.c == 0 || s.h == 0 || s.w == 0)
        throw DimensionError("tensor dimensions must be >= 1, got " + s.str());
}

}  // namespace

Tensor4::Tensor4(Shape shape, double fill) : shape_(shape) {
    check_dims(shape);
    data_.assign(shape.numel(), fill);
}

Tensor4::Tensor4(Shape shape, std::vector<double> data) : shape_(shape), data_(std::move(data)) {
    check_dims(shape);
    if (data_.size() != shape.numel())
        throw DimensionError("data length " + std::to_string(data_.size()) + " does not match shape " +
                             shape.str());
}

Tensor4 Tensor4::vector(std::vector<double> values) {
    const std::size_t len = values.size();
    return Tensor4(Shape{1, len, 1, 1}, std::move(values));
}

double Tensor4::item() const {
    if (data_.size() != 1) throw DimensionError("item() on non-scalar tensor " + shape_.str());
    return data_[0];
}

double Tensor4::sum() const { return std::accumulate(data_.begin(), data_.end(), 0.0); }

bool Tensor4::all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

void Tensor4::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

bool Tensor4::bitwise_equal(const Tensor4& other) const {
    return shape_ == other.shape_ &&
           (data_.empty() || std::memcmp(data_.data(), other.data_.data(), data_.size() * sizeof(double)) == 0);
}

double max_abs_diff(const Tensor4& a, const Tensor4& b) {
    if (a.shape() != b.shape())
        throw DimensionError("max_abs_diff: shape " + a.shape().str() + " vs " + b.shape().str());
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

void write_tensor(const Tensor4& t, const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open " + path.string() + " for writing");
    const Shape& s = t.shape();
    for (std::size_t d : {s.n, s.c, s.h, s.w}) detail::put_u32(os, static_cast<std::uint32_t>(d));
    for (double v : t.data()) detail::put_f64(os, v);
    if (!os) throw IoError("write failed: " + path.string());
}

Tensor4 read_tensor(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open " + path.string());
    detail::LeReader in(is, path.string());
    Shape s;
    s.n = in.u32();
    s.c = in.u32();
    s.h = in.u32();
    s.w = in.u32();
    if (s.numel() == 0 || s.numel() > (std::size_t{1} << 32))
        throw CorruptFileError(path.string() + ": implausible dims " + s.str());
    std::vector<double> data(s.numel());
    for (double& v : data) v = in.f64();
    if (!in.at_end()) throw CorruptFileError(path.string() + ": trailing bytes");
    return Tensor4(s, std::move(data));
}

}  // namespace svan
