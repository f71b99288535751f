#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "schn/error.hpp"

namespace schn {

struct EstimateWithError {
  double mean = 0.0;
  double std_error = 0.0;  // batch-means standard error
  std::int64_t n_samples = 0;
  std::int64_t batch_count = 0;

  /// |mean - value| <= k * stderr, with the standard error floored at
  /// 1/n_samples so a run that never saw the event is not infinitely sure.
  [[nodiscard]] bool agrees_with(double value, double k = 3.0) const {
    const double floor = n_samples > 0 ? 1.0 / static_cast<double>(n_samples) : 0.0;
    return std::abs(mean - value) <= k * std::max(std_error, floor);
  }
};

/// Streaming batch means for a sample count fixed in advance. Samples beyond
/// batch_count * batch_size are ignored.
class BatchMeans {
 public:
  BatchMeans(std::int64_t n_samples, std::int64_t batch_count)
      : batch_count_(batch_count), batch_size_(batch_count > 0 ? n_samples / batch_count : 0) {
    detail::require(batch_count >= 8, "BatchMeans: need at least 8 batches");
    detail::require(batch_size_ >= 1, "BatchMeans: fewer samples than batches");
    sums_.assign(static_cast<std::size_t>(batch_count_), 0.0);
  }

  void add(double x) {
    if (seen_ >= batch_count_ * batch_size_) return;
    sums_[static_cast<std::size_t>(seen_ / batch_size_)] += x;
    ++seen_;
  }

  [[nodiscard]] EstimateWithError estimate() const {
    EstimateWithError out;
    out.batch_count = batch_count_;
    out.n_samples = seen_;
    const std::int64_t full = seen_ / batch_size_;
    if (full < 2) {
      out.mean = full == 1 ? sums_[0] / static_cast<double>(batch_size_) : 0.0;
      out.std_error = std::numeric_limits<double>::infinity();
      return out;
    }
    double total = 0.0;
    for (std::int64_t b = 0; b < full; ++b) total += sums_[b];
    out.mean = total / static_cast<double>(full * batch_size_);
    double ss = 0.0;
    for (std::int64_t b = 0; b < full; ++b) {
      const double d = sums_[b] / static_cast<double>(batch_size_) - out.mean;
      ss += d * d;
    }
    out.std_error = std::sqrt(ss / static_cast<double>(full * (full - 1)));
    return out;
  }

 private:
  std::int64_t batch_count_;
  std::int64_t batch_size_;
  std::int64_t seen_ = 0;
  std::vector<double> sums_;
};

/// Sample-count weighted merge of independent estimates, in the given order.
inline EstimateWithError merge_estimates(std::span<const EstimateWithError> parts) {
  EstimateWithError out;
  double weighted = 0.0;
  double var = 0.0;
  for (const auto& p : parts) {
    out.n_samples += p.n_samples;
    out.batch_count += p.batch_count;
    weighted += p.mean * static_cast<double>(p.n_samples);
  }
  if (out.n_samples == 0) return out;
  const double n = static_cast<double>(out.n_samples);
  out.mean = weighted / n;
  for (const auto& p : parts) {
    const double w = static_cast<double>(p.n_samples) / n;
    var += w * w * p.std_error * p.std_error;
  }
  out.std_error = std::sqrt(var);
  return out;
}

/// Ordinary least squares y = intercept + slope * x.
struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
  double slope_stderr = 0.0;
  std::size_t points = 0;
};

inline LinearFit fit_line(std::span<const double> x, std::span<const double> y) {
  detail::require(x.size() == y.size() && x.size() >= 2, "fit_line: need >= 2 paired points");
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  detail::require(sxx > 0.0, "fit_line: x values are all equal");
  LinearFit f;
  f.points = x.size();
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  const double ss_res = std::max(0.0, syy - f.slope * sxy);
  f.r2 = syy > 0.0 ? std::clamp(1.0 - ss_res / syy, 0.0, 1.0) : 1.0;
  f.slope_stderr = x.size() > 2 ? std::sqrt(ss_res / (n - 2.0) / sxx) : 0.0;
  return f;
}

}  // namespace schn
