#include "fairpoi/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <boost/math/special_functions/gamma.hpp>

#include "json.hpp"

#include "fairpoi/error.hpp"

namespace fairpoi::stats {

namespace {

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

double chi_square_survival(double x, double dof) {
  if (x <= 0.0) return 1.0;
  return boost::math::gamma_q(dof / 2.0, x / 2.0);
}

// Sum of t^3 - t over tie groups of the pooled sample.
double tie_term(std::vector<double> pooled) {
  std::sort(pooled.begin(), pooled.end());
  double total = 0.0;
  std::size_t i = 0;
  while (i < pooled.size()) {
    std::size_t j = i;
    while (j < pooled.size() && pooled[j] == pooled[i]) ++j;
    const double t = static_cast<double>(j - i);
    total += t * t * t - t;
    i = j;
  }
  return total;
}

}  // namespace

std::vector<double> midranks(const std::vector<double>& values) {
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });

  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j < n && values[order[j]] == values[order[i]]) ++j;
    const double avg = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t k = i; k < j; ++k) ranks[order[k]] = avg;
    i = j;
  }
  return ranks;
}

TestResult kruskal_wallis(const std::vector<std::vector<double>>& groups) {
  if (groups.size() < 2) throw ConfigError("kruskal_wallis needs at least 2 groups");
  std::vector<double> pooled;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    if (groups[g].empty())
      throw DataError("kruskal_wallis: group " + std::to_string(g + 1) + " is empty");
    pooled.insert(pooled.end(), groups[g].begin(), groups[g].end());
  }

  const double N = static_cast<double>(pooled.size());
  const auto ranks = midranks(pooled);

  const double grand_mean = (N + 1.0) / 2.0;
  double h = 0.0;
  std::size_t offset = 0;
  std::vector<std::size_t> sizes;
  for (const auto& g : groups) {
    double sum = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) sum += ranks[offset + i];
    const double mean = sum / static_cast<double>(g.size());
    h += static_cast<double>(g.size()) * (mean - grand_mean) * (mean - grand_mean);
    offset += g.size();
    sizes.push_back(g.size());
  }
  h *= 12.0 / (N * (N + 1.0));

  const double correction = 1.0 - tie_term(pooled) / (N * N * N - N);
  TestResult r;
  r.n = sizes;
  if (correction <= 0.0) {
    // Every value identical.
    r.statistic = 0.0;
    r.p_value = 1.0;
    r.method = "chi-square approximation (degenerate: all values tied)";
    return r;
  }
  r.statistic = h / correction;
  r.p_value = chi_square_survival(r.statistic, static_cast<double>(groups.size() - 1));
  r.method = "chi-square approximation, tie-corrected";
  return r;
}

TestResult mann_whitney_u(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.empty() || b.empty()) throw DataError("mann_whitney_u: empty sample");
  const double n1 = static_cast<double>(a.size());
  const double n2 = static_cast<double>(b.size());
  const double N = n1 + n2;

  std::vector<double> pooled = a;
  pooled.insert(pooled.end(), b.begin(), b.end());
  const auto ranks = midranks(pooled);

  double r1 = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) r1 += ranks[i];
  const double u1 = r1 - n1 * (n1 + 1.0) / 2.0;
  const double u2 = n1 * n2 - u1;
  const double u = std::min(u1, u2);

  const double mu = n1 * n2 / 2.0;
  const double var =
      n1 * n2 / 12.0 * ((N + 1.0) - tie_term(pooled) / (N * (N - 1.0)));

  TestResult r;
  r.statistic = u;
  r.n = {a.size(), b.size()};
  if (var <= 0.0) {
    r.p_value = 1.0;
    r.method = "normal approximation (degenerate: all values tied)";
    return r;
  }
  const double z = (u - mu + 0.5) / std::sqrt(var);
  r.p_value = std::min(1.0, 2.0 * normal_cdf(z));
  r.method = "normal approximation, tie-corrected, continuity-corrected";
  return r;
}

TestResult wilcoxon_signed_rank(const std::vector<double>& paired_differences) {
  std::vector<double> d;
  for (double x : paired_differences)
    if (x != 0.0) d.push_back(x);
  if (d.empty())
    throw DataError("wilcoxon_signed_rank: all differences are zero");

  const std::size_t n = d.size();
  std::vector<double> mags(n);
  for (std::size_t i = 0; i < n; ++i) mags[i] = std::abs(d[i]);
  const auto ranks = midranks(mags);

  double w_pos = 0.0, total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    total += ranks[i];
    if (d[i] > 0.0) w_pos += ranks[i];
  }
  const double w_min = std::min(w_pos, total - w_pos);

  TestResult r;
  r.statistic = w_min;
  r.n = {n};

  if (n <= 25) {
    // Doubled midranks are integral, so the null distribution of 2*W+ can
    // be tabulated exactly with a subset-sum DP over all 2^n sign choices.
    std::vector<long long> dr(n);
    long long s2 = 0;
    for (std::size_t i = 0; i < n; ++i) {
      dr[i] = std::llround(ranks[i] * 2.0);
      s2 += dr[i];
    }
    std::vector<double> counts(static_cast<std::size_t>(s2) + 1, 0.0);
    counts[0] = 1.0;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t s = counts.size(); s-- > static_cast<std::size_t>(dr[i]);)
        counts[s] += counts[s - static_cast<std::size_t>(dr[i])];
    }
    const auto w2 = static_cast<std::size_t>(std::llround(w_min * 2.0));
    const auto hi2 = static_cast<std::size_t>(s2) - w2;
    double tail = 0.0;
    for (std::size_t s = 0; s <= w2; ++s) tail += counts[s];
    for (std::size_t s = hi2; s < counts.size(); ++s) tail += counts[s];
    r.p_value = std::min(1.0, tail / std::pow(2.0, static_cast<double>(n)));
    r.method = "exact enumeration";
    return r;
  }

  const double nn = static_cast<double>(n);
  const double mu = nn * (nn + 1.0) / 4.0;
  double ties = 0.0;
  {
    std::vector<double> sorted = mags;
    std::sort(sorted.begin(), sorted.end());
    std::size_t i = 0;
    while (i < sorted.size()) {
      std::size_t j = i;
      while (j < sorted.size() && sorted[j] == sorted[i]) ++j;
      const double t = static_cast<double>(j - i);
      ties += t * t * t - t;
      i = j;
    }
  }
  const double var = (nn * (nn + 1.0) * (2.0 * nn + 1.0) - ties / 2.0) / 24.0;
  if (var <= 0.0) {
    r.p_value = 1.0;
    r.method = "normal approximation (degenerate)";
    return r;
  }
  const double z = (w_min - mu + 0.5) / std::sqrt(var);
  r.p_value = std::min(1.0, 2.0 * normal_cdf(z));
  r.method = "normal approximation, continuity-corrected";
  return r;
}

std::string TestResult::to_json() const {
  nlohmann::json j;
  j["statistic"] = statistic;
  j["p_value"] = p_value;
  j["n"] = n;
  j["method"] = method;
  return j.dump(2);
}

}  // namespace fairpoi::stats
