#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace fairpoi::stats {

struct TestResult {
  double statistic = 0.0;
  double p_value = 1.0;
  std::vector<std::size_t> n;  // sample sizes
  std::string method;          // exact vs approximation note

  std::string to_json() const;
};

// Midranks (average ranks for ties) of the values, 1-based.
std::vector<double> midranks(const std::vector<double>& values);

// H with the usual tie correction; p from chi-square with g-1 dof. All
// values identical degenerates to H = 0, p = 1.
TestResult kruskal_wallis(const std::vector<std::vector<double>>& groups);

// Reports the smaller of U_a / U_b; two-sided p from the ties-corrected
// normal approximation with continuity correction.
TestResult mann_whitney_u(const std::vector<double>& a, const std::vector<double>& b);

// Zeros are dropped; W = min of the signed-rank sums. Exact enumeration up
// to n = 25, normal approximation with continuity correction beyond.
TestResult wilcoxon_signed_rank(const std::vector<double>& paired_differences);

}  // namespace fairpoi::stats
