#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

namespace multisoc {

// Running mean/variance of return targets. The critic regresses normalized
// returns; consumers denormalize its output before any bootstrapping.
class ValueNormalizer {
 public:
  void update(const std::vector<double>& returns) {
    if (returns.empty()) return;
    double sum = 0.0, sum_sq = 0.0;
    for (double r : returns) {
      sum += r;
      sum_sq += r * r;
    }
    const double n = static_cast<double>(returns.size());
    const double total = count_ + n;
    const double delta = sum / n - mean_;
    const double batch_var = sum_sq / n - (sum / n) * (sum / n);
    // parallel-variance merge of the running and batch statistics
    var_ = (count_ * var_ + n * batch_var + count_ * n / total * delta * delta) / total;
    mean_ += delta * n / total;
    count_ = total;
  }

  double normalize(double v) const { return (v - mean_) / stddev(); }
  double denormalize(double v) const { return v * stddev() + mean_; }

  double mean() const { return mean_; }
  double variance() const { return var_; }
  double count() const { return count_; }

  void restore(double mean, double var, double count) {
    mean_ = mean;
    var_ = var;
    count_ = count;
  }

 private:
  double stddev() const { return std::sqrt(std::max(var_, 1e-8)); }

  double mean_ = 0.0;
  double var_ = 1.0;
  double count_ = 0.0;
};

}  // namespace multisoc
