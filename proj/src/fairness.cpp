#include "fairpoi/fairness.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "json.hpp"

#include "fairpoi/error.hpp"
#include "fairpoi/geo.hpp"

namespace fairpoi::fairness {

namespace {
using nlohmann::json;
constexpr int kModelFormatVersion = 1;
}  // namespace

PopularityHistogram build_popularity_histogram(const Dataset& train) {
  if (train.checkins.empty()) throw DataError("cannot build a histogram from an empty train split");
  std::map<PoiId, std::uint64_t> counts;
  for (const auto& [id, poi] : train.pois) counts[id] = 0;
  for (const auto& c : train.checkins) ++counts[c.poi_id];

  std::map<std::uint64_t, std::uint64_t> bins;
  PopularityHistogram h;
  for (const auto& [id, n] : counts) {
    if (n == 0) ++h.zero_count;
    else ++bins[n];
  }
  h.points.assign(bins.begin(), bins.end());
  return h;
}

std::string family_name(ExposureFamily f) {
  switch (f) {
    case ExposureFamily::PowerLaw: return "powerlaw";
    case ExposureFamily::Linear: return "linear";
    case ExposureFamily::Logistic: return "logistic";
  }
  return "powerlaw";
}

ExposureFamily family_from_name(const std::string& name) {
  if (name == "powerlaw") return ExposureFamily::PowerLaw;
  if (name == "linear") return ExposureFamily::Linear;
  if (name == "logistic") return ExposureFamily::Logistic;
  throw ConfigError("unknown exposure family '" + name + "' (expected powerlaw, linear or logistic)");
}

double ExposureModel::provider_score(std::uint64_t checkin_count) const {
  const double x = static_cast<double>(std::max<std::uint64_t>(checkin_count, 1));
  switch (family) {
    case ExposureFamily::PowerLaw: {
      const double y = p0 * std::pow(x, p1);
      return std::clamp(y / score_ceiling, 0.0, 1.0);
    }
    case ExposureFamily::Linear: {
      const double y = std::max(0.0, p0 + p1 * x);
      return std::clamp(y / score_ceiling, 0.0, 1.0);
    }
    case ExposureFamily::Logistic: {
      const double z = p0 * std::log(x) + p1;
      return 1.0 / (1.0 + std::exp(-z));
    }
  }
  return 0.0;
}

std::string ExposureModel::to_json() const {
  json j;
  j["format"] = "fairpoi-exposure";
  j["version"] = kModelFormatVersion;
  j["family"] = family_name(family);
  j["p0"] = p0;
  j["p1"] = p1;
  j["score_ceiling"] = score_ceiling;
  j["x_min"] = x_min;
  return j.dump(2);
}

ExposureModel ExposureModel::from_json(const std::string& text) {
  json j = json::parse(text);
  if (j.value("format", "") != "fairpoi-exposure")
    throw DataError("not an exposure model document");
  if (j.value("version", 0) != kModelFormatVersion)
    throw DataError("unsupported exposure model version");
  ExposureModel m;
  m.family = family_from_name(j.at("family").get<std::string>());
  m.p0 = j.at("p0").get<double>();
  m.p1 = j.at("p1").get<double>();
  m.score_ceiling = j.at("score_ceiling").get<double>();
  m.x_min = j.at("x_min").get<std::uint64_t>();
  return m;
}

namespace {

std::vector<std::pair<double, double>> histogram_points(const PopularityHistogram& h) {
  std::vector<std::pair<double, double>> xy;
  xy.reserve(h.points.size());
  for (const auto& [x, y] : h.points)
    xy.emplace_back(static_cast<double>(x), static_cast<double>(y));
  return xy;
}

void require_two_points(const std::vector<std::pair<double, double>>& xy, const char* what) {
  std::vector<double> xs;
  for (const auto& [x, y] : xy) {
    if (x < 1.0) throw DataError(std::string(what) + ": x values must be >= 1");
    if (y <= 0.0) throw DataError(std::string(what) + ": y values must be > 0");
    xs.push_back(x);
  }
  std::sort(xs.begin(), xs.end());
  xs.erase(std::unique(xs.begin(), xs.end()), xs.end());
  if (xs.size() < 2)
    throw DataError(std::string(what) + " needs at least 2 distinct check-in counts, got " +
                    std::to_string(xs.size()));
}

double min_x(const std::vector<std::pair<double, double>>& xy) {
  double m = xy.front().first;
  for (const auto& [x, y] : xy) m = std::min(m, x);
  return m;
}

}  // namespace

ExposureModel fit_power_law_points(const std::vector<std::pair<double, double>>& xy,
                                   double ridge_lambda) {
  require_two_points(xy, "power-law fit");
  if (ridge_lambda < 0.0) throw ConfigError("ridge_lambda must be >= 0");

  const std::size_t n = xy.size();
  double mx = 0.0, my = 0.0;
  std::vector<double> lx(n), ly(n);
  for (std::size_t i = 0; i < n; ++i) {
    lx[i] = std::log(xy[i].first);
    ly[i] = std::log(xy[i].second);
    mx += lx[i];
    my += ly[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);

  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (lx[i] - mx) * (lx[i] - mx);
    sxy += (lx[i] - mx) * (ly[i] - my);
  }

  // Intercept is unpenalized, so the centered slope solves
  // min_b sum (y' - b x')^2 + lambda b^2.
  double slope = sxy / (sxx + ridge_lambda);
  // A fairness score must not grow with popularity.
  slope = std::min(slope, 0.0);
  const double intercept = my - slope * mx;

  ExposureModel m;
  m.family = ExposureFamily::PowerLaw;
  m.p0 = std::exp(intercept);
  m.p1 = slope;
  m.x_min = static_cast<std::uint64_t>(std::llround(min_x(xy)));
  m.score_ceiling = m.p0 * std::pow(static_cast<double>(m.x_min), m.p1);
  return m;
}

ExposureModel fit_power_law(const PopularityHistogram& h, double ridge_lambda) {
  return fit_power_law_points(histogram_points(h), ridge_lambda);
}

ExposureModel fit_linear_points(const std::vector<std::pair<double, double>>& xy) {
  require_two_points(xy, "linear fit");

  const std::size_t n = xy.size();
  double mx = 0.0, my = 0.0;
  for (const auto& [x, y] : xy) {
    mx += x;
    my += y;
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);

  double sxx = 0.0, sxy = 0.0;
  for (const auto& [x, y] : xy) {
    sxx += (x - mx) * (x - mx);
    sxy += (x - mx) * (y - my);
  }

  double slope = sxy / sxx;
  slope = std::min(slope, 0.0);

  ExposureModel m;
  m.family = ExposureFamily::Linear;
  m.p1 = slope;
  m.p0 = my - slope * mx;
  m.x_min = static_cast<std::uint64_t>(std::llround(min_x(xy)));
  m.score_ceiling = std::max(0.0, m.p0 + m.p1 * static_cast<double>(m.x_min));
  if (m.score_ceiling <= 0.0)
    throw DataError("linear exposure fit predicts a non-positive value at the minimum count");
  return m;
}

ExposureModel fit_linear(const PopularityHistogram& h) {
  return fit_linear_points(histogram_points(h));
}

ExposureModel fit_logistic(const PopularityHistogram& h) {
  if (h.points.size() < 2)
    throw DataError("logistic fit needs at least 2 distinct check-in counts, got " +
                    std::to_string(h.points.size()));

  // Reconstruct per-POI (feature, label) samples from the histogram using
  // the same counting rule as assign_groups: rank POIs by count descending,
  // the top ceil(20%) are short-head (label 0), the rest long-tail (label
  // 1). Ties share a feature value, so only the per-bin label counts matter.
  const std::uint64_t total = h.total_pois();
  const auto n_short =
      static_cast<std::uint64_t>(std::ceil(0.2 * static_cast<double>(total)));
  if (n_short == 0 || n_short >= total)
    throw DataError("logistic fit needs both short-head and long-tail POIs");

  struct Bin {
    double feature;
    double n_short = 0;
    double n_long = 0;
  };
  std::vector<Bin> bins;
  std::uint64_t remaining_short = n_short;
  for (auto it = h.points.rbegin(); it != h.points.rend(); ++it) {
    const auto [x, y] = *it;
    Bin b;
    b.feature = std::log(static_cast<double>(x));
    const std::uint64_t take = std::min<std::uint64_t>(remaining_short, y);
    b.n_short = static_cast<double>(take);
    b.n_long = static_cast<double>(y - take);
    remaining_short -= take;
    bins.push_back(b);
  }
  if (h.zero_count > 0) {
    Bin b;
    b.feature = 0.0;  // zero counts score as count 1
    const std::uint64_t take = std::min<std::uint64_t>(remaining_short, h.zero_count);
    b.n_short = static_cast<double>(take);
    b.n_long = static_cast<double>(h.zero_count - take);
    bins.push_back(b);
  }

  // Damped Newton on the negative log-likelihood. Near-separable data pushes
  // the slope toward infinity; the coefficient cap stops the walk once the
  // sigmoid has saturated.
  const auto nll = [&](double w, double c) {
    double acc = 0.0;
    for (const auto& b : bins) {
      const double z = w * b.feature + c;
      // log(1 + e^z) computed stably on both sides.
      const double lse = z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
      acc += (b.n_short + b.n_long) * lse - b.n_long * z;
    }
    return acc;
  };

  double n_long_total = 0.0, n_all = 0.0;
  for (const auto& b : bins) {
    n_long_total += b.n_long;
    n_all += b.n_short + b.n_long;
  }
  double w = 0.0;
  double c = std::log(n_long_total / (n_all - n_long_total));
  constexpr double kCap = 50.0;
  double current = nll(w, c);
  for (int iter = 0; iter < 500; ++iter) {
    double g0 = 0.0, g1 = 0.0, h00 = 0.0, h01 = 0.0, h11 = 0.0;
    for (const auto& b : bins) {
      const double z = w * b.feature + c;
      const double p = 1.0 / (1.0 + std::exp(-z));
      const double n = b.n_short + b.n_long;
      const double resid = n * p - b.n_long;  // gradient of the NLL
      g0 += resid * b.feature;
      g1 += resid;
      const double v = n * p * (1.0 - p);
      h00 += v * b.feature * b.feature;
      h01 += v * b.feature;
      h11 += v;
    }
    h00 += 1e-9;
    h11 += 1e-9;
    const double det = h00 * h11 - h01 * h01;
    if (det <= 0.0) break;
    double dw = -(h11 * g0 - h01 * g1) / det;
    double dc = -(h00 * g1 - h01 * g0) / det;
    // Backtracking line search.
    double step = 1.0;
    double next_w = w, next_c = c, next_val = current;
    bool improved = false;
    for (int halving = 0; halving < 40; ++halving) {
      const double cand_w = std::clamp(w + step * dw, -kCap, kCap);
      const double cand_c = std::clamp(c + step * dc, -kCap, kCap);
      const double val = nll(cand_w, cand_c);
      if (val < current) {
        next_w = cand_w;
        next_c = cand_c;
        next_val = val;
        improved = true;
        break;
      }
      step /= 2.0;
    }
    if (!improved) break;
    const bool converged =
        std::abs(next_w - w) < 1e-10 && std::abs(next_c - c) < 1e-10;
    w = next_w;
    c = next_c;
    current = next_val;
    if (converged) break;
  }
  w = std::min(w, 0.0);

  ExposureModel m;
  m.family = ExposureFamily::Logistic;
  m.p0 = w;
  m.p1 = c;
  m.x_min = h.points.front().first;
  m.score_ceiling = 1.0;
  return m;
}

ConsumerContext build_consumer_context(const Dataset& train, const GroupAssignment& groups) {
  ConsumerContext ctx;

  std::map<PoiId, std::uint64_t> counts;
  for (const auto& [id, poi] : train.pois) {
    counts[id] = 0;
    ctx.poi_coords[id] = {poi.latitude, poi.longitude};
  }
  for (const auto& c : train.checkins) ++counts[c.poi_id];

  std::uint64_t cmin = UINT64_MAX, cmax = 0;
  for (const auto& [id, n] : counts) {
    cmin = std::min(cmin, n);
    cmax = std::max(cmax, n);
  }
  for (const auto& [id, n] : counts) {
    ctx.normalized_popularity[id] =
        cmax > cmin ? static_cast<double>(n - cmin) / static_cast<double>(cmax - cmin) : 0.5;
  }

  for (const auto& u : train.users) {
    auto& entry = ctx.users[u];
    entry.active = groups.is_active(u);
  }
  for (const auto& c : train.checkins) {
    auto& entry = ctx.users.at(c.user_id);
    if (entry.visited.insert(c.poi_id).second) {
      const auto& poi = train.pois.at(c.poi_id);
      entry.visited_coords.emplace_back(poi.latitude, poi.longitude);
    }
  }

  for (auto& [u, entry] : ctx.users) {
    if (entry.active) continue;
    if (entry.visited.empty())
      throw Error("user '" + u + "' has no train visits; split a filtered dataset first");
    std::vector<double> dists;
    dists.reserve(train.pois.size());
    for (const auto& [pid, poi] : train.pois) {
      if (entry.visited.count(pid)) continue;
      double best = std::numeric_limits<double>::infinity();
      for (const auto& [vlat, vlon] : entry.visited_coords)
        best = std::min(best, haversine_km(poi.latitude, poi.longitude, vlat, vlon));
      dists.push_back(best);
    }
    if (dists.empty()) continue;  // visited everything; no candidates to score
    std::sort(dists.begin(), dists.end());
    const auto rank = static_cast<std::size_t>(
        std::ceil(0.2 * static_cast<double>(dists.size())));
    entry.threshold_km = dists[std::max<std::size_t>(rank, 1) - 1];
    entry.has_threshold = true;
  }

  return ctx;
}

double consumer_score(const ConsumerContext& ctx, const UserId& user, const PoiId& poi) {
  const auto uit = ctx.users.find(user);
  if (uit == ctx.users.end()) throw DataError("unknown user '" + user + "'");
  const auto& entry = uit->second;
  if (entry.active || !entry.has_threshold) return 0.0;

  const auto pit = ctx.poi_coords.find(poi);
  if (pit == ctx.poi_coords.end()) throw DataError("unknown POI '" + poi + "'");

  double best = std::numeric_limits<double>::infinity();
  for (const auto& [vlat, vlon] : entry.visited_coords)
    best = std::min(best, haversine_km(pit->second.first, pit->second.second, vlat, vlon));
  if (best > entry.threshold_km) return 0.0;
  return ctx.normalized_popularity.at(poi);
}

rec::ScoredCandidates rescore(const rec::ScoredCandidates& base,
                              const ProviderLookup& provider,
                              const ConsumerLookup& consumer,
                              const FairnessWeights& w) {
  if (w.alpha < 0.0 || w.alpha > 1.0 || w.beta < 0.0 || w.beta > 1.0)
    throw ConfigError("fairness weights must lie in [0, 1]");

  rec::ScoredCandidates out;
  out.user_id = base.user_id;
  out.entries.reserve(base.entries.size());
  const double denom = 1.0 + w.alpha + w.beta;
  for (const auto& [poi, score] : base.entries) {
    double s = score;
    if (w.alpha > 0.0) s += w.alpha * provider(poi);
    if (w.beta > 0.0) s += w.beta * consumer(base.user_id, poi);
    out.entries.emplace_back(poi, s / denom);
  }
  return out;
}

}  // namespace fairpoi::fairness
