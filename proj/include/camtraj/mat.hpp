#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace camtraj {

// Dense row-major double matrix. The workhorse value type for trajectories,
// wavelet bands, and loss inputs.
class Mat {
public:
    Mat() = default;
    Mat(int rows, int cols) : rows_(rows), cols_(cols), v_(static_cast<size_t>(rows) * cols, 0.0) {
        if (rows < 0 || cols < 0) throw std::invalid_argument("Mat: negative dimensions");
    }
    Mat(int rows, int cols, std::vector<double> data) : rows_(rows), cols_(cols), v_(std::move(data)) {
        if (v_.size() != static_cast<size_t>(rows) * cols)
            throw std::invalid_argument("Mat: data size does not match shape");
    }

    int rows() const { return rows_; }
    int cols() const { return cols_; }
    size_t size() const { return v_.size(); }

    double& operator()(int r, int c) { return v_[static_cast<size_t>(r) * cols_ + c]; }
    double operator()(int r, int c) const { return v_[static_cast<size_t>(r) * cols_ + c]; }

    const std::vector<double>& data() const { return v_; }
    std::vector<double>& data() { return v_; }

    bool same_shape(const Mat& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

    bool all_finite() const {
        for (double x : v_)
            if (!std::isfinite(x)) return false;
        return true;
    }

    // Squared Frobenius norm. Fixed summation order keeps results bit-stable.
    double frob2() const {
        double s = 0.0;
        for (double x : v_) s += x * x;
        return s;
    }

    Mat row_range(int r0, int r1) const {
        Mat out(r1 - r0, cols_);
        for (int r = r0; r < r1; ++r)
            for (int c = 0; c < cols_; ++c) out(r - r0, c) = (*this)(r, c);
        return out;
    }

    friend Mat operator+(const Mat& a, const Mat& b) {
        check_same(a, b, "+");
        Mat out(a.rows_, a.cols_);
        for (size_t i = 0; i < a.v_.size(); ++i) out.v_[i] = a.v_[i] + b.v_[i];
        return out;
    }
    friend Mat operator-(const Mat& a, const Mat& b) {
        check_same(a, b, "-");
        Mat out(a.rows_, a.cols_);
        for (size_t i = 0; i < a.v_.size(); ++i) out.v_[i] = a.v_[i] - b.v_[i];
        return out;
    }
    friend Mat operator*(double s, const Mat& a) {
        Mat out(a.rows_, a.cols_);
        for (size_t i = 0; i < a.v_.size(); ++i) out.v_[i] = s * a.v_[i];
        return out;
    }

    bool operator==(const Mat& o) const { return rows_ == o.rows_ && cols_ == o.cols_ && v_ == o.v_; }

private:
    static void check_same(const Mat& a, const Mat& b, const char* op) {
        if (!a.same_shape(b))
            throw std::invalid_argument(std::string("Mat: shape mismatch in operator") + op);
    }

    int rows_ = 0;
    int cols_ = 0;
    std::vector<double> v_;
};

inline double max_abs_diff(const Mat& a, const Mat& b) {
    double m = 0.0;
    for (size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
    return m;
}

}  // namespace camtraj
