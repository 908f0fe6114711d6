#pragma once

#include <functional>
#include <span>
#include <vector>

namespace mesokappa {

// Neumaier-compensated running sum.
class CompensatedSum {
 public:
  void add(double x);
  double value() const { return sum_ + comp_; }
  void reset() { sum_ = comp_ = 0.0; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

struct KsResult {
  double statistic = 0.0;
  double p_value = 1.0;
};

// Survival function of the Kolmogorov distribution, P(K > lambda).
double kolmogorov_survival(double lambda);

// One-sample test of data against a continuous CDF.
KsResult ks_one_sample(std::vector<double> data, const std::function<double(double)>& cdf);

// Two-sample test; p-value from the asymptotic distribution with the
// Stephens small-sample correction.
KsResult ks_two_sample(std::vector<double> a, std::vector<double> b);

double mean(std::span<const double> x);
double sample_variance(std::span<const double> x);

}  // namespace mesokappa
