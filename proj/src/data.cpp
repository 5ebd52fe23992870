#include "rre/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "rre/errors.hpp"

namespace rre::data {

namespace {

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            cells.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur.push_back(c);
        }
    }
    cells.push_back(cur);
    return cells;
}

}  // namespace

namespace {
RawSeries load_csv_impl(const std::string& path, const std::string* target_name) {
    std::ifstream is(path);
    if (!is) throw ParseError("cannot open CSV file: " + path);
    std::string line;
    if (!std::getline(is, line)) throw ParseError("empty CSV file: " + path);
    RawSeries out;
    out.names = split_line(line);
    const int dims = static_cast<int>(out.names.size());

    out.target = 0;
    if (target_name) {
        int target = -1;
        for (int i = 0; i < dims; ++i) {
            if (out.names[i] == *target_name) target = i;
        }
        if (target < 0) {
            throw SchemaError("target column '" + *target_name + "' not found in " + path);
        }
        out.target = target;
    }

    std::vector<double> values;
    int row = 1;  // header was row 0
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        auto cells = split_line(line);
        if (static_cast<int>(cells.size()) != dims) {
            throw ParseError("row " + std::to_string(row) + " has " +
                             std::to_string(cells.size()) + " cells, expected " +
                             std::to_string(dims));
        }
        for (int c = 0; c < dims; ++c) {
            try {
                size_t pos = 0;
                double v = std::stod(cells[c], &pos);
                while (pos < cells[c].size() && std::isspace(static_cast<unsigned char>(cells[c][pos]))) ++pos;
                if (pos != cells[c].size()) throw std::invalid_argument("trailing");
                values.push_back(v);
            } catch (const std::exception&) {
                throw ParseError("unparseable cell at row " + std::to_string(row) + ", column " +
                                 out.names[c]);
            }
        }
        ++row;
    }
    const int steps = row - 1;
    out.values = Tensor::matrix(steps, dims, std::move(values));
    out.values.check_finite("CSV " + path);
    return out;
}
}  // namespace

RawSeries load_csv(const std::string& path, const std::string& target_name) {
    return load_csv_impl(path, &target_name);
}

RawSeries load_csv(const std::string& path) { return load_csv_impl(path, nullptr); }

void write_csv(const std::string& path, const RawSeries& series) {
    std::ofstream os(path);
    if (!os) throw ParseError("cannot open CSV for writing: " + path);
    for (size_t i = 0; i < series.names.size(); ++i) {
        if (i) os << ",";
        os << series.names[i];
    }
    os << "\n";
    os.precision(17);
    for (int r = 0; r < series.steps(); ++r) {
        for (int c = 0; c < series.dims(); ++c) {
            if (c) os << ",";
            os << series.values.at(r, c);
        }
        os << "\n";
    }
}

Scaler fit_scaler(const Tensor& train_rows) {
    const int n = train_rows.rows();
    const int d = train_rows.cols();
    if (n == 0) throw ShapeError("fit_scaler on empty matrix");
    Scaler s;
    s.min.assign(d, 0.0);
    s.max.assign(d, 0.0);
    for (int c = 0; c < d; ++c) {
        double lo = train_rows.at(0, c);
        double hi = lo;
        for (int r = 1; r < n; ++r) {
            lo = std::min(lo, train_rows.at(r, c));
            hi = std::max(hi, train_rows.at(r, c));
        }
        s.min[c] = lo;
        s.max[c] = hi;
    }
    return s;
}

double Scaler::transform_value(double v, int col) const {
    const double lo = min[static_cast<size_t>(col)];
    const double hi = max[static_cast<size_t>(col)];
    if (hi <= lo) return 0.0;  // constant column
    return 2.0 * (v - lo) / (hi - lo) - 1.0;
}

double Scaler::inverse_value(double v, int col) const {
    const double lo = min[static_cast<size_t>(col)];
    const double hi = max[static_cast<size_t>(col)];
    if (hi <= lo) return lo;
    return (v + 1.0) * 0.5 * (hi - lo) + lo;
}

Tensor Scaler::transform(const Tensor& rows) const {
    if (rows.cols() != static_cast<int>(min.size())) {
        throw ShapeError("scaler dimensionality mismatch");
    }
    Tensor out = Tensor::zeros(rows.shape());
    for (int r = 0; r < rows.rows(); ++r) {
        for (int c = 0; c < rows.cols(); ++c) out.at(r, c) = transform_value(rows.at(r, c), c);
    }
    return out;
}

Tensor Scaler::inverse_transform(const Tensor& rows) const {
    if (rows.cols() != static_cast<int>(min.size())) {
        throw ShapeError("scaler dimensionality mismatch");
    }
    Tensor out = Tensor::zeros(rows.shape());
    for (int r = 0; r < rows.rows(); ++r) {
        for (int c = 0; c < rows.cols(); ++c) out.at(r, c) = inverse_value(rows.at(r, c), c);
    }
    return out;
}

namespace {
Tensor take_rows(const Tensor& m, int begin, int end) {
    const int d = m.cols();
    std::vector<double> vals;
    vals.reserve(static_cast<size_t>(end - begin) * d);
    for (int r = begin; r < end; ++r) {
        for (int c = 0; c < d; ++c) vals.push_back(m.at(r, c));
    }
    return Tensor::matrix(end - begin, d, std::move(vals));
}
}  // namespace

Split chronological_split(const RawSeries& series, int T, int H, double train_ratio,
                          double val_ratio, double test_ratio) {
    const double total = train_ratio + val_ratio + test_ratio;
    if (std::abs(total - 1.0) > 1e-9) throw SplitError("split ratios must sum to 1");
    const int n = series.steps();
    const int b1 = static_cast<int>(std::floor(n * train_ratio));
    const int b2 = static_cast<int>(std::floor(n * (train_ratio + val_ratio)));
    const int min_len = T + H;
    if (b1 < min_len || (b2 - b1) < min_len || (n - b2) < min_len) {
        throw SplitError("segment shorter than T+H=" + std::to_string(min_len) +
                         " (split " + std::to_string(b1) + "/" + std::to_string(b2 - b1) + "/" +
                         std::to_string(n - b2) + ")");
    }
    Split out;
    out.train = take_rows(series.values, 0, b1);
    out.val = take_rows(series.values, b1, b2);
    out.test = take_rows(series.values, b2, n);
    return out;
}

std::vector<WindowedExample> make_windows(const Tensor& segment, int T, int H, int target) {
    const int n = segment.rows();
    const int d = segment.cols();
    if (target < 0 || target >= d) throw ShapeError("target column out of range");
    if (n < T + H) throw SplitError("segment shorter than T+H");
    std::vector<WindowedExample> out;
    out.reserve(static_cast<size_t>(n - T - H + 1));
    for (int s = 0; s + T + H <= n; ++s) {
        WindowedExample ex;
        ex.X = take_rows(segment, s, s + T);
        std::vector<double> y_all;
        y_all.reserve(static_cast<size_t>(T) * H);
        for (int t = 0; t < T; ++t) {
            for (int h = 1; h <= H; ++h) y_all.push_back(segment.at(s + t + h, target));
        }
        ex.Y_all = Tensor::matrix(T, H, std::move(y_all));
        std::vector<double> last;
        last.reserve(static_cast<size_t>(H));
        for (int h = 0; h < H; ++h) last.push_back(ex.Y_all.at(T - 1, h));
        ex.y_last = Tensor::vector(std::move(last));
        out.push_back(std::move(ex));
    }
    return out;
}

std::pair<double, double> mse_mae(const Tensor& pred, const Tensor& truth) {
    if (!pred.same_shape(truth)) throw ShapeError("mse_mae: length mismatch");
    const int h = pred.size();
    double se = 0.0, ae = 0.0;
    for (int i = 0; i < h; ++i) {
        const double d = pred[i] - truth[i];
        se += d * d;
        ae += std::abs(d);
    }
    return {se / h, ae / h};
}

RawSeries make_synthetic(const SynthConfig& cfg) {
    Rng rng(Rng::derive(cfg.seed, "synth"));
    const int n = cfg.steps;
    const int lag = cfg.lag;
    RawSeries out;
    out.names = {"y", "driver", "noise1", "noise2"};
    out.target = 0;

    // Mean-reverting stochastic driver. Its innovations are unpredictable
    // from the target's own history, so the driver channel carries genuine
    // lead information for horizons up to the lag.
    std::vector<double> driver(static_cast<size_t>(n + lag));
    double d = 0.0;
    for (int t = 0; t < n + lag; ++t) {
        d = 0.92 * d + 0.35 * rng.normal();
        driver[static_cast<size_t>(t)] = d;
    }

    std::vector<double> vals;
    vals.reserve(static_cast<size_t>(n) * 4);
    for (int t = 0; t < n; ++t) {
        const double base = 0.5 * std::sin(2.0 * M_PI * t / 53.0) +
                            0.3 * std::sin(2.0 * M_PI * t / 17.0 + 1.3) + 0.0003 * t;
        const double drive = t >= lag ? driver[static_cast<size_t>(t - lag)] : 0.0;
        const double y = base + 0.8 * drive + cfg.obs_noise * rng.normal();

        // a fraction of time steps observes pure noise on the driver channel
        const bool corrupted = rng.uniform() < cfg.noise_frac;
        const double driver_obs =
            corrupted ? rng.uniform(-cfg.noise_amp, cfg.noise_amp) : driver[static_cast<size_t>(t)];
        vals.push_back(y);
        vals.push_back(driver_obs);
        vals.push_back(rng.uniform(-1.0, 1.0));
        vals.push_back(rng.uniform(-1.0, 1.0));
    }
    out.values = Tensor::matrix(n, 4, std::move(vals));
    return out;
}

}  // namespace rre::data
