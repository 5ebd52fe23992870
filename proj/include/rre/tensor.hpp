#pragma once

#include <cmath>
#include <initializer_list>
#include <string>
#include <vector>

#include "rre/errors.hpp"

namespace rre {

// Dense row-major f64 tensor. Rank 0 (scalar), 1 (vector) and 2 (matrix)
// cover everything this project needs.
class Tensor {
public:
    Tensor() = default;

    Tensor(std::vector<int> shape, std::vector<double> data);

    static Tensor zeros(std::vector<int> shape);
    static Tensor full(std::vector<int> shape, double value);
    static Tensor scalar(double value);
    static Tensor vector(std::vector<double> values);
    static Tensor matrix(int rows, int cols, std::vector<double> values);

    const std::vector<int>& shape() const { return shape_; }
    int size() const { return static_cast<int>(data_.size()); }
    int rank() const { return static_cast<int>(shape_.size()); }

    // 2-D accessors; a rank-1 tensor behaves as a single column.
    int rows() const;
    int cols() const;

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    double operator[](int i) const { return data_[static_cast<size_t>(i)]; }
    double& operator[](int i) { return data_[static_cast<size_t>(i)]; }

    double at(int r, int c) const { return data_[static_cast<size_t>(r) * cols() + c]; }
    double& at(int r, int c) { return data_[static_cast<size_t>(r) * cols() + c]; }

    // Value of a size-1 tensor.
    double item() const;

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

    void fill(double v);

    // Throws NumericalError naming `what` if any element is NaN/Inf.
    void check_finite(const std::string& what) const;
    bool all_finite() const;

private:
    std::vector<int> shape_;
    std::vector<double> data_;
};

int shape_size(const std::vector<int>& shape);
std::string shape_str(const std::vector<int>& shape);

}  // namespace rre
