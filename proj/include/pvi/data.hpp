#pragma once

#include <pvi/numerics.hpp>

#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace pvi {

struct Dataset {
  Matrix features;   // n x d
  Vector responses;  // n
  // Standardization statistics, populated by standardize().
  Vector feat_mean, feat_std;
  double resp_mean = 0.0, resp_std = 1.0;
  bool standardized = false;

  Eigen::Index n() const { return features.rows(); }
  Eigen::Index d() const { return features.cols(); }
};

// CSV with an optional single header row; every cell numeric. The response
// column defaults to the last; feature_cols empty means "all others".
inline Dataset load_csv(const std::string& path, std::vector<Eigen::Index> feature_cols = {},
                        Eigen::Index response_col = -1, bool has_header = true) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_csv: cannot open " + path);
  std::vector<std::vector<double>> rows;
  std::string line;
  Eigen::Index line_no = 0;
  bool first = true;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (first && has_header) {
      first = false;
      continue;
    }
    first = false;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    Eigen::Index col = 0;
    while (std::getline(ss, cell, ',')) {
      ++col;
      try {
        std::size_t used = 0;
        const double v = std::stod(cell, &used);
        while (used < cell.size() && std::isspace(static_cast<unsigned char>(cell[used]))) ++used;
        if (used != cell.size()) throw std::invalid_argument(cell);
        if (!std::isfinite(v)) throw std::invalid_argument(cell);
        row.push_back(v);
      } catch (const std::exception&) {
        throw std::runtime_error("load_csv: non-numeric cell at row " + std::to_string(line_no) +
                                 ", column " + std::to_string(col) + " of " + path);
      }
    }
    if (!rows.empty() && row.size() != rows.front().size())
      throw std::runtime_error("load_csv: ragged row " + std::to_string(line_no) + " in " + path);
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw std::runtime_error("load_csv: no data rows in " + path);
  const auto n_cols = static_cast<Eigen::Index>(rows.front().size());
  if (response_col < 0) response_col = n_cols - 1;
  if (response_col >= n_cols)
    throw std::runtime_error("load_csv: response column out of range");
  if (feature_cols.empty())
    for (Eigen::Index c = 0; c < n_cols; ++c)
      if (c != response_col) feature_cols.push_back(c);
  Dataset ds;
  ds.features.resize(static_cast<Eigen::Index>(rows.size()),
                     static_cast<Eigen::Index>(feature_cols.size()));
  ds.responses.resize(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < feature_cols.size(); ++j) {
      const auto c = feature_cols[j];
      if (c < 0 || c >= n_cols) throw std::runtime_error("load_csv: feature column out of range");
      ds.features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          rows[i][static_cast<std::size_t>(c)];
    }
    ds.responses[static_cast<Eigen::Index>(i)] = rows[i][static_cast<std::size_t>(response_col)];
  }
  return ds;
}

inline void save_csv(const std::string& path, const Dataset& ds) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_csv: cannot open " + path);
  out.precision(17);
  for (Eigen::Index j = 0; j < ds.d(); ++j) out << "x" << (j + 1) << ",";
  out << "y\n";
  for (Eigen::Index i = 0; i < ds.n(); ++i) {
    for (Eigen::Index j = 0; j < ds.d(); ++j) out << ds.features(i, j) << ",";
    out << ds.responses[i] << "\n";
  }
  if (!out) throw std::runtime_error("save_csv: write failed for " + path);
}

// Center and scale every feature column (and optionally the response) to
// mean 0, standard deviation 1. Degenerate columns are an error, not a drop.
inline Dataset standardize(const Dataset& ds, bool responses_too = false) {
  if (ds.n() < 2) throw std::invalid_argument("standardize: need at least 2 rows");
  Dataset out = ds;
  out.feat_mean = ds.features.colwise().mean().transpose();
  out.feat_std.resize(ds.d());
  for (Eigen::Index j = 0; j < ds.d(); ++j) {
    const double var = (ds.features.col(j).array() - out.feat_mean[j]).square().sum() /
                       static_cast<double>(ds.n() - 1);
    if (var < 1e-24)
      throw std::runtime_error("standardize: zero-variance feature column " + std::to_string(j));
    out.feat_std[j] = std::sqrt(var);
    out.features.col(j) = (ds.features.col(j).array() - out.feat_mean[j]) / out.feat_std[j];
  }
  if (responses_too) {
    out.resp_mean = ds.responses.mean();
    const double var = (ds.responses.array() - out.resp_mean).square().sum() /
                       static_cast<double>(ds.n() - 1);
    if (var < 1e-24) throw std::runtime_error("standardize: zero-variance response");
    out.resp_std = std::sqrt(var);
    out.responses = (ds.responses.array() - out.resp_mean) / out.resp_std;
  }
  out.standardized = true;
  return out;
}

// Seeded shuffle, then the first n_train rows form the training set.
inline std::pair<Dataset, Dataset> split(const Dataset& ds, Eigen::Index n_train, Rng& rng) {
  if (n_train <= 0 || n_train >= ds.n())
    throw std::invalid_argument("split: n_train must lie strictly inside (0, n)");
  const auto perm = rng.permutation(ds.n());
  Dataset train = ds, test = ds;
  train.features.resize(n_train, ds.d());
  train.responses.resize(n_train);
  test.features.resize(ds.n() - n_train, ds.d());
  test.responses.resize(ds.n() - n_train);
  for (Eigen::Index i = 0; i < ds.n(); ++i) {
    const Eigen::Index src = perm[static_cast<std::size_t>(i)];
    if (i < n_train) {
      train.features.row(i) = ds.features.row(src);
      train.responses[i] = ds.responses[src];
    } else {
      test.features.row(i - n_train) = ds.features.row(src);
      test.responses[i - n_train] = ds.responses[src];
    }
  }
  return {train, test};
}

// Classic 21-attribute waveform generator: each instance interpolates two of
// three triangular base waves with uniform mixing plus unit Gaussian noise.
// The response is the class label 0, 1, or 2.
inline Dataset gen_waveform(Rng& rng, Eigen::Index n) {
  if (n < 1) throw std::invalid_argument("gen_waveform: n must be positive");
  auto wave = [](int center, int i) {
    return std::max(6.0 - std::abs(static_cast<double>(i - center)), 0.0);
  };
  const int centers[3] = {7, 15, 11};  // base waves h1, h2, h3
  const int pairs[3][2] = {{0, 1}, {0, 2}, {1, 2}};
  Dataset ds;
  ds.features.resize(n, 21);
  ds.responses.resize(n);
  for (Eigen::Index r = 0; r < n; ++r) {
    const auto cls = static_cast<int>(rng.uniform_int(3));
    const double u = rng.uniform();
    for (int i = 0; i < 21; ++i) {
      const double a = wave(centers[pairs[cls][0]], i + 1);
      const double b = wave(centers[pairs[cls][1]], i + 1);
      ds.features(r, i) = u * a + (1.0 - u) * b + rng.normal();
    }
    ds.responses[r] = static_cast<double>(cls);
  }
  return ds;
}

// Collapse the three waveform classes to a binary response: class 0 is the
// positive class, classes 1 and 2 the negative.
inline Dataset binarize_waveform(const Dataset& ds) {
  Dataset out = ds;
  for (Eigen::Index i = 0; i < out.n(); ++i)
    out.responses[i] = (ds.responses[i] == 0.0) ? 1.0 : 0.0;
  return out;
}

// Smooth nonlinear regression surface on standard-normal features, used as a
// deterministic stand-in for tabular regression benchmarks. Needs d >= 5.
inline Dataset gen_regression(Rng& rng, Eigen::Index n, Eigen::Index d,
                              double noise_sd = 0.2) {
  if (d < 5) throw std::invalid_argument("gen_regression: need at least 5 features");
  if (n < 1) throw std::invalid_argument("gen_regression: n must be positive");
  Dataset ds;
  ds.features = rng.normal_matrix(n, d);
  ds.responses.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& u = ds.features;
    double y = 2.0 * std::sin(u(i, 0) + u(i, 1)) + 0.5 * u(i, 2) * u(i, 2) + u(i, 3) * u(i, 4);
    for (Eigen::Index j = 5; j < d; ++j) y += 0.3 * std::cos(u(i, j));
    ds.responses[i] = y + noise_sd * rng.normal();
  }
  return ds;
}

}  // namespace pvi
