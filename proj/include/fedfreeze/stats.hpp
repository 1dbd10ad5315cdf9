#pragma once

#include <span>
#include <string>

namespace fedfreeze {

struct TTestResult {
  double t_statistic = 0.0;
  double degrees_of_freedom = 0.0;
  double p_value = 1.0;
};

/// Two-sided Welch (unequal variance) t-test with Welch-Satterthwaite degrees of freedom.
/// When both samples have zero variance: p = 1 for equal means, p = 0 otherwise.
TTestResult welch_ttest(std::span<const double> a, std::span<const double> b);

/// "***" p<0.001, "**" p<0.01, "*" p<0.05, otherwise "ns".
std::string significance_stars(double p_value);

double sample_mean(std::span<const double> x);
/// Unbiased (n-1) standard deviation; 0 for fewer than two values.
double sample_std(std::span<const double> x);
double median(std::span<const double> x);

}  // namespace fedfreeze
