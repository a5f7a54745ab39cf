#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "fairpoi/recommenders.hpp"
#include "fairpoi/types.hpp"

namespace fairpoi::fairness {

// y(x) = number of POIs whose train check-in count is exactly x, for x >= 1.
// POIs with no train check-ins are tracked separately so the histogram still
// accounts for every POI in the table.
struct PopularityHistogram {
  std::vector<std::pair<std::uint64_t, std::uint64_t>> points;  // x ascending
  std::uint64_t zero_count = 0;

  std::uint64_t total_pois() const {
    std::uint64_t t = zero_count;
    for (const auto& [x, y] : points) t += y;
    return t;
  }
};

PopularityHistogram build_popularity_histogram(const Dataset& train);

enum class ExposureFamily { PowerLaw, Linear, Logistic };

std::string family_name(ExposureFamily f);
ExposureFamily family_from_name(const std::string& name);

// Maps a POI's train check-in count to a provider-fairness score in [0, 1],
// non-increasing in the count. PowerLaw and Linear are fits to the
// popularity histogram normalized by their prediction at the least popular
// observed count; Logistic is the predicted probability of long-tail
// membership.
struct ExposureModel {
  ExposureFamily family = ExposureFamily::PowerLaw;
  // PowerLaw: w0 * x^w1      (p0 = w0, p1 = w1)
  // Linear:   a + b * x      (p0 = a,  p1 = b)
  // Logistic: sigmoid(w * ln x + c)   (p0 = w, p1 = c)
  double p0 = 0.0;
  double p1 = 0.0;
  double score_ceiling = 1.0;
  std::uint64_t x_min = 1;

  // Zero counts are scored as count 1: an unseen POI is at least as
  // unpopular as the least popular observed one.
  double provider_score(std::uint64_t checkin_count) const;

  std::string to_json() const;
  static ExposureModel from_json(const std::string& text);
};

// ln y ~ a + b ln x with an L2 penalty of ridge_lambda on the slope only.
// w1 = b, w0 = exp(a), ceiling = prediction at the smallest observed count.
ExposureModel fit_power_law(const PopularityHistogram& h, double ridge_lambda = 10.0);

// Plain least squares y ~ a + b x on the histogram points; predictions are
// clamped at 0 before normalization.
ExposureModel fit_linear(const PopularityHistogram& h);

// Same fits over raw (x, y) points with x >= 1, y > 0.
ExposureModel fit_power_law_points(const std::vector<std::pair<double, double>>& xy,
                                   double ridge_lambda = 10.0);
ExposureModel fit_linear_points(const std::vector<std::pair<double, double>>& xy);

// Logistic regression on per-POI samples implied by the histogram: feature
// ln(count), label 1 for long-tail membership under the same top-20%% rule
// assign_groups uses. Separable data saturates rather than erroring.
ExposureModel fit_logistic(const PopularityHistogram& h);

// Everything consumer_score needs, built once per train split. The nearby
// threshold of an inactive user is the 20th percentile (nearest-rank) of the
// distances from each unvisited POI to that user's closest visited POI.
struct ConsumerContext {
  struct UserEntry {
    bool active = false;
    std::vector<std::pair<double, double>> visited_coords;  // distinct POIs
    std::set<PoiId> visited;
    double threshold_km = 0.0;
    bool has_threshold = false;
  };
  std::map<UserId, UserEntry> users;
  std::map<PoiId, double> normalized_popularity;  // min-max over train counts
  std::map<PoiId, std::pair<double, double>> poi_coords;
};

ConsumerContext build_consumer_context(const Dataset& train, const GroupAssignment& groups);

// 0 for active users; for inactive users, the POI's normalized popularity if
// it lies within the user's nearby threshold, else 0.
double consumer_score(const ConsumerContext& ctx, const UserId& user, const PoiId& poi);

struct FairnessWeights {
  double alpha = 0.0;  // provider weight
  double beta = 0.0;   // consumer weight
  ExposureFamily exposure_family = ExposureFamily::PowerLaw;
};

using ProviderLookup = std::function<double(const PoiId&)>;
using ConsumerLookup = std::function<double(const UserId&, const PoiId&)>;

// final(u,p) = (base + alpha*F_p + beta*F_c) / (1 + alpha + beta).
// alpha = beta = 0 reproduces the base scores bit for bit.
rec::ScoredCandidates rescore(const rec::ScoredCandidates& base,
                              const ProviderLookup& provider,
                              const ConsumerLookup& consumer,
                              const FairnessWeights& w);

}  // namespace fairpoi::fairness
