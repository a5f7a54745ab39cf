#include "fairpoi/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "fairpoi/error.hpp"
#include "fairpoi/geo.hpp"

namespace fairpoi::metrics {

double precision_at_k(const rec::RecommendationList& recs,
                      const std::set<PoiId>& test_visits, std::size_t k) {
  if (k == 0) throw ConfigError("precision_at_k: k must be >= 1");
  std::size_t hits = 0;
  const std::size_t window = std::min(k, recs.ranked.size());
  for (std::size_t i = 0; i < window; ++i)
    if (test_visits.count(recs.ranked[i].first)) ++hits;
  return static_cast<double>(hits) / static_cast<double>(k);
}

double hit_rate_at_k(const rec::RecommendationList& recs,
                     const std::set<PoiId>& test_visits, std::size_t k) {
  if (k == 0) throw ConfigError("hit_rate_at_k: k must be >= 1");
  const std::size_t window = std::min(k, recs.ranked.size());
  for (std::size_t i = 0; i < window; ++i)
    if (test_visits.count(recs.ranked[i].first)) return 1.0;
  return 0.0;
}

ExposureTable exposure_table(const std::vector<rec::RecommendationList>& all_recs,
                             const std::map<PoiId, Poi>& pois) {
  ExposureTable t;
  for (const auto& [id, poi] : pois) t.exposure[id] = 0;
  for (const auto& recs : all_recs) {
    for (const auto& [poi, score] : recs.ranked) {
      ++t.exposure[poi];
      ++t.total_slots;
    }
  }
  return t;
}

double group_mean_exposure(const ExposureTable& t, const GroupAssignment& g,
                           ItemGroup group) {
  std::uint64_t sum = 0, size = 0;
  for (const auto& [poi, grp] : g.item_group) {
    if (grp != group) continue;
    ++size;
    const auto it = t.exposure.find(poi);
    if (it != t.exposure.end()) sum += it->second;
  }
  if (size == 0) throw DataError("group_mean_exposure: the group is empty");
  return static_cast<double>(sum) / static_cast<double>(size);
}

MetricDistribution user_gain_distribution(
    const std::vector<rec::RecommendationList>& all_recs, const Dataset& test,
    const GroupAssignment& g) {
  std::map<UserId, std::set<PoiId>> test_visits;
  for (const auto& c : test.checkins) test_visits[c.user_id].insert(c.poi_id);

  double active = 0.0, inactive = 0.0;
  for (const auto& recs : all_recs) {
    const auto it = test_visits.find(recs.user_id);
    if (it == test_visits.end()) continue;
    double hits = 0.0;
    for (const auto& [poi, score] : recs.ranked)
      if (it->second.count(poi)) hits += 1.0;
    (g.is_active(recs.user_id) ? active : inactive) += hits;
  }

  MetricDistribution d;
  d.labels = {"active", "inactive"};
  d.normalizer = active + inactive;
  if (d.normalizer == 0.0)
    throw DataError("user_gain_distribution: no hits anywhere, distribution undefined");
  d.mass = {active / d.normalizer, inactive / d.normalizer};
  return d;
}

MetricDistribution item_gain_distribution(
    const std::vector<rec::RecommendationList>& all_recs, const GroupAssignment& g) {
  double short_head = 0.0, long_tail = 0.0;
  for (const auto& recs : all_recs) {
    for (const auto& [poi, score] : recs.ranked)
      (g.is_short_head(poi) ? short_head : long_tail) += 1.0;
  }

  MetricDistribution d;
  d.labels = {"short_head", "long_tail"};
  d.normalizer = short_head + long_tail;
  if (d.normalizer == 0.0)
    throw DataError("item_gain_distribution: no recommendations");
  d.mass = {short_head / d.normalizer, long_tail / d.normalizer};
  return d;
}

GceResult gce(const MetricDistribution& p_m, const std::vector<double>& p_f,
              double order) {
  if (p_m.mass.size() != p_f.size())
    throw ConfigError("gce: distributions cover different group sets");
  if (order == 0.0 || order == 1.0)
    throw ConfigError("gce: order must differ from 0 and 1");

  double fair_sum = 0.0;
  for (double f : p_f) {
    if (f <= 0.0) throw ConfigError("gce: fair distribution must be strictly positive");
    fair_sum += f;
  }
  if (std::abs(fair_sum - 1.0) > 1e-9)
    throw ConfigError("gce: fair distribution must sum to 1");

  GceResult r;
  double sum = 0.0;
  for (std::size_t i = 0; i < p_f.size(); ++i) {
    const double m = p_m.mass[i];
    if (m == 0.0) {
      if (order > 1.0) {
        r.degenerate = true;
        return r;
      }
      continue;
    }
    sum += std::pow(p_f[i], order) * std::pow(m, 1.0 - order);
  }
  r.value = (sum - 1.0) / (order * (1.0 - order));
  return r;
}

Centroid user_centroid(const std::vector<std::pair<double, double>>& visited_coords) {
  if (visited_coords.empty()) throw DataError("user_centroid: no visited POIs");
  Centroid c;
  double lon_min = std::numeric_limits<double>::infinity();
  double lon_max = -lon_min;
  for (const auto& [lat, lon] : visited_coords) {
    c.latitude += lat;
    c.longitude += lon;
    lon_min = std::min(lon_min, lon);
    lon_max = std::max(lon_max, lon);
  }
  const double n = static_cast<double>(visited_coords.size());
  c.latitude /= n;
  c.longitude /= n;
  // A raw longitude mean is ill-defined across the antimeridian; both study
  // datasets are regional, so this is flagged rather than corrected.
  c.antimeridian_flagged = lon_max - lon_min > 180.0;
  return c;
}

std::map<UserId, Centroid> build_centroids(const Dataset& train) {
  std::map<UserId, std::vector<std::pair<double, double>>> coords;
  std::map<UserId, std::set<PoiId>> seen;
  for (const auto& c : train.checkins) {
    if (!seen[c.user_id].insert(c.poi_id).second) continue;
    const auto& poi = train.pois.at(c.poi_id);
    coords[c.user_id].emplace_back(poi.latitude, poi.longitude);
  }
  std::map<UserId, Centroid> out;
  for (const auto& [u, cs] : coords) out[u] = user_centroid(cs);
  return out;
}

double mean_median_distance(const std::vector<rec::RecommendationList>& all_recs,
                            const std::map<UserId, Centroid>& centroids,
                            const std::map<PoiId, Poi>& pois) {
  double total = 0.0;
  std::size_t counted = 0;
  for (const auto& recs : all_recs) {
    if (recs.ranked.empty()) continue;
    const auto cit = centroids.find(recs.user_id);
    if (cit == centroids.end())
      throw DataError("mean_median_distance: no centroid for user '" + recs.user_id + "'");
    std::vector<double> dists;
    dists.reserve(recs.ranked.size());
    for (const auto& [poi, score] : recs.ranked) {
      const auto& p = pois.at(poi);
      dists.push_back(haversine_km(cit->second.latitude, cit->second.longitude,
                                   p.latitude, p.longitude));
    }
    std::sort(dists.begin(), dists.end());
    const std::size_t m = dists.size();
    const double median =
        m % 2 == 1 ? dists[m / 2] : (dists[m / 2 - 1] + dists[m / 2]) / 2.0;
    total += median;
    ++counted;
  }
  if (counted == 0) throw DataError("mean_median_distance: no non-empty lists");
  return total / static_cast<double>(counted);
}

std::vector<std::size_t> pareto_front(const std::vector<ParetoPoint>& points) {
  if (points.empty()) throw ConfigError("pareto_front: need at least one point");

  std::vector<std::size_t> order(points.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (points[a].user_gce != points[b].user_gce)
      return points[a].user_gce > points[b].user_gce;
    return points[a].item_gce > points[b].item_gce;
  });

  std::vector<std::size_t> front;
  double best_item = -std::numeric_limits<double>::infinity();
  std::size_t i = 0;
  while (i < order.size()) {
    // Points sharing a user_gce value: only the max item_gce among them can
    // be non-dominated, and only if it strictly beats everything above.
    std::size_t j = i;
    while (j < order.size() &&
           points[order[j]].user_gce == points[order[i]].user_gce)
      ++j;
    const double group_best = points[order[i]].item_gce;  // sorted desc within group
    if (group_best > best_item) {
      for (std::size_t k = i; k < j; ++k)
        if (points[order[k]].item_gce == group_best) front.push_back(order[k]);
      best_item = group_best;
    }
    i = j;
  }
  std::sort(front.begin(), front.end());
  return front;
}

}  // namespace fairpoi::metrics
