#pragma once

#include <string>
#include <utility>
#include <vector>

#include "rre/rng.hpp"
#include "rre/tensor.hpp"

namespace rre::data {

// A loaded multivariate series: rows are time steps (oldest first), columns
// are variables. `target` indexes the endogenous variable to forecast.
struct RawSeries {
    Tensor values;  // steps x dims
    std::vector<std::string> names;
    int target = 0;

    int steps() const { return values.rows(); }
    int dims() const { return values.cols(); }
};

RawSeries load_csv(const std::string& path, const std::string& target_name);
// Without a target column requirement (column order preserved, target = 0).
RawSeries load_csv(const std::string& path);
void write_csv(const std::string& path, const RawSeries& series);

// Per-variable min-max scaling onto [-1, 1], fitted on training rows only.
// Constant columns map to 0.
struct Scaler {
    std::vector<double> min;
    std::vector<double> max;

    Tensor transform(const Tensor& rows) const;
    Tensor inverse_transform(const Tensor& rows) const;
    double transform_value(double v, int col) const;
    double inverse_value(double v, int col) const;
};

Scaler fit_scaler(const Tensor& train_rows);

struct Split {
    Tensor train;
    Tensor val;
    Tensor test;
};

// Contiguous chronological segments at floor(N*r1) and floor(N*(r1+r2)).
// Throws SplitError when any segment is shorter than T + H.
Split chronological_split(const RawSeries& series, int T, int H, double train_ratio = 0.7,
                          double val_ratio = 0.1, double test_ratio = 0.2);

// One supervision pair in scaled space. X holds T input rows; Y_all row t
// holds the next H target values after step t; y_last is Y_all's final row.
struct WindowedExample {
    Tensor X;      // T x D_in
    Tensor Y_all;  // T x H
    Tensor y_last; // H
};

std::vector<WindowedExample> make_windows(const Tensor& segment, int T, int H, int target);

// (mse, mae) with the 1/H normalization.
std::pair<double, double> mse_mae(const Tensor& pred, const Tensor& truth);

// Synthetic series for experiments: smooth target driven by a lagged
// exogenous signal, plus pure-noise variables and randomly chosen time steps
// whose informative inputs are replaced by noise.
struct SynthConfig {
    int steps = 2000;
    double noise_frac = 0.25;   // fraction of steps with corrupted informative inputs
    double noise_amp = 2.5;     // amplitude of the injected noise
    double obs_noise = 0.02;    // always-on observation noise on the target
    int lag = 4;                // driver-to-target lag
    std::uint64_t seed = 1;
};

RawSeries make_synthetic(const SynthConfig& cfg);

}  // namespace rre::data
