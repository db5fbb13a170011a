#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "cglo/error.hpp"

namespace cglo {

using Real = double;
using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
}

inline std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '(';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << 'x';
        os << shape[i];
    }
    os << ')';
    return os.str();
}

/// Dense row-major tensor of doubles.
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(Shape shape, Real fill = 0.0) : shape_(std::move(shape)) {
        check_extents();
        data_.assign(shape_size(shape_), fill);
    }

    Tensor(Shape shape, std::vector<Real> data) : shape_(std::move(shape)), data_(std::move(data)) {
        check_extents();
        if (data_.size() != shape_size(shape_)) {
            throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                             " does not match shape " + shape_str(shape_));
        }
    }

    static Tensor vector(std::initializer_list<Real> values) {
        return Tensor({values.size()}, std::vector<Real>(values));
    }

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
    std::size_t size() const noexcept { return data_.size(); }

    std::span<Real> data() noexcept { return data_; }
    std::span<const Real> data() const noexcept { return data_; }
    const std::vector<Real>& values() const noexcept { return data_; }

    Real& operator[](std::size_t i) { return data_[i]; }
    Real operator[](std::size_t i) const { return data_[i]; }

    // Three-index accessors for CxHxW tensors.
    Real& at(std::size_t c, std::size_t y, std::size_t x) {
        return data_[(c * shape_[1] + y) * shape_[2] + x];
    }
    Real at(std::size_t c, std::size_t y, std::size_t x) const {
        return data_[(c * shape_[1] + y) * shape_[2] + x];
    }

    Tensor reshaped(Shape shape) const {
        if (shape_size(shape) != data_.size()) {
            throw ShapeError("cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
        }
        return Tensor(std::move(shape), data_);
    }

    void fill(Real v) { std::fill(data_.begin(), data_.end(), v); }

    friend bool operator==(const Tensor&, const Tensor&) = default;

private:
    void check_extents() const {
        for (auto e : shape_) {
            if (e == 0) throw ShapeError("tensor extents must be positive, got " + shape_str(shape_));
        }
    }

    Shape shape_;
    std::vector<Real> data_;
};

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
    }
}

/// Ordered set of named tensors. Used for generator weights and for
/// gradients keyed by parameter name.
class NamedTensors {
public:
    void add(std::string name, Tensor t) {
        if (find(name) != nullptr) throw ShapeError("duplicate tensor name '" + name + "'");
        entries_.emplace_back(std::move(name), std::move(t));
    }

    const Tensor* find(const std::string& name) const {
        for (const auto& [n, t] : entries_) {
            if (n == name) return &t;
        }
        return nullptr;
    }
    Tensor* find(const std::string& name) {
        for (auto& [n, t] : entries_) {
            if (n == name) return &t;
        }
        return nullptr;
    }

    const Tensor& at(const std::string& name) const {
        if (auto* t = find(name)) return *t;
        throw ShapeError("no tensor named '" + name + "'");
    }
    Tensor& at(const std::string& name) {
        if (auto* t = find(name)) return *t;
        throw ShapeError("no tensor named '" + name + "'");
    }

    std::size_t size() const noexcept { return entries_.size(); }
    bool empty() const noexcept { return entries_.empty(); }

    auto begin() noexcept { return entries_.begin(); }
    auto end() noexcept { return entries_.end(); }
    auto begin() const noexcept { return entries_.begin(); }
    auto end() const noexcept { return entries_.end(); }

    const std::pair<std::string, Tensor>& operator[](std::size_t i) const { return entries_[i]; }
    std::pair<std::string, Tensor>& operator[](std::size_t i) { return entries_[i]; }

    friend bool operator==(const NamedTensors&, const NamedTensors&) = default;

private:
    std::vector<std::pair<std::string, Tensor>> entries_;
};

using Gradients = NamedTensors;

}  // namespace cglo
