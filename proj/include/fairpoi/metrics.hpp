#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "fairpoi/recommenders.hpp"
#include "fairpoi/types.hpp"

namespace fairpoi::metrics {

// |top-k hits| / k. The hit-rate reading of the paper's wording (any hit in
// the window counts as 1) is available separately and is not the default.
double precision_at_k(const rec::RecommendationList& recs,
                      const std::set<PoiId>& test_visits, std::size_t k);
double hit_rate_at_k(const rec::RecommendationList& recs,
                     const std::set<PoiId>& test_visits, std::size_t k);

// E_p = number of recommendation lists containing p, binary attention.
// Every POI in the table gets an entry, zero when never recommended.
struct ExposureTable {
  std::map<PoiId, std::uint64_t> exposure;
  std::uint64_t total_slots = 0;
};

ExposureTable exposure_table(const std::vector<rec::RecommendationList>& all_recs,
                             const std::map<PoiId, Poi>& pois);

double group_mean_exposure(const ExposureTable& t, const GroupAssignment& g,
                           ItemGroup group);

// Normalized per-group mass of a metric; labels align with the mass vector.
struct MetricDistribution {
  std::vector<std::string> labels;
  std::vector<double> mass;
  double normalizer = 0.0;
};

// Group mass = test hits by that group's users, over all lists. Z = total
// hits; Z = 0 throws (the distribution is undefined).
MetricDistribution user_gain_distribution(
    const std::vector<rec::RecommendationList>& all_recs, const Dataset& test,
    const GroupAssignment& g);

// Group mass = recommendation slots given to that group's POIs. Kept as an
// independent fold over the lists; tests cross-check it against
// exposure_table sums.
MetricDistribution item_gain_distribution(
    const std::vector<rec::RecommendationList>& all_recs, const GroupAssignment& g);

// Generalized cross-entropy between the observed distribution and a fair
// target; 0 iff they match, negative otherwise (order 2 = Pearson chi^2).
// A group with observed mass 0 but fair mass > 0 is reported as degenerate
// instead of -inf.
struct GceResult {
  double value = 0.0;
  bool degenerate = false;
};

GceResult gce(const MetricDistribution& p_m, const std::vector<double>& p_f,
              double order = 2.0);

inline std::vector<double> uniform_fair(std::size_t groups) {
  return std::vector<double>(groups, 1.0 / static_cast<double>(groups));
}

struct Centroid {
  double latitude = 0.0;
  double longitude = 0.0;
  bool antimeridian_flagged = false;  // visit longitudes spanned > 180 degrees
};

// Arithmetic mean of the distinct train-visited POI coordinates.
Centroid user_centroid(const std::vector<std::pair<double, double>>& visited_coords);

std::map<UserId, Centroid> build_centroids(const Dataset& train);

// Per user: median haversine distance from the centroid to each recommended
// POI; returns the mean over users with non-empty lists.
double mean_median_distance(const std::vector<rec::RecommendationList>& all_recs,
                            const std::map<UserId, Centroid>& centroids,
                            const std::map<PoiId, Poi>& pois);

struct ParetoPoint {
  std::string label;
  double user_gce = 0.0;
  double item_gce = 0.0;
  double precision = 0.0;
};

// Indices of the points not dominated in the (user_gce, item_gce) plane,
// maximizing both. Equal points are mutually non-dominating and all kept.
std::vector<std::size_t> pareto_front(const std::vector<ParetoPoint>& points);

}  // namespace fairpoi::metrics
