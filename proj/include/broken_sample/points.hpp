#pragma once

#include <cassert>
#include <cstddef>
#include <span>
#include <vector>

#include "broken_sample/errors.hpp"

namespace broken_sample {

/// A sample of points in R^dim stored row-major. Discrete symbols are stored
/// as their (integer-valued) index with dim = 1.
class PointSet {
public:
    explicit PointSet(std::size_t dim = 1) : dim_(dim) { require(dim >= 1, "point dimension must be >= 1"); }

    PointSet(std::size_t dim, std::vector<double> data) : dim_(dim), data_(std::move(data)) {
        require(dim >= 1, "point dimension must be >= 1");
        require(data_.size() % dim_ == 0, "point data length is not a multiple of the dimension");
    }

    PointSet(std::size_t dim, std::size_t count) : dim_(dim), data_(dim * count, 0.0) {
        require(dim >= 1, "point dimension must be >= 1");
    }

    std::size_t dim() const noexcept { return dim_; }
    std::size_t size() const noexcept { return data_.size() / dim_; }
    bool empty() const noexcept { return data_.empty(); }

    std::span<const double> operator[](std::size_t i) const noexcept {
        assert(i < size());
        return {data_.data() + i * dim_, dim_};
    }
    std::span<double> operator[](std::size_t i) noexcept {
        assert(i < size());
        return {data_.data() + i * dim_, dim_};
    }

    void push_back(std::span<const double> point) {
        require(point.size() == dim_, "point dimension mismatch");
        data_.insert(data_.end(), point.begin(), point.end());
    }

    void resize(std::size_t count) { data_.resize(count * dim_, 0.0); }

    const std::vector<double>& data() const noexcept { return data_; }
    std::vector<double>& data() noexcept { return data_; }

    friend bool operator==(const PointSet&, const PointSet&) = default;

private:
    std::size_t dim_;
    std::vector<double> data_;
};

}  // namespace broken_sample
