#include "fairpoi/recommenders.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "json.hpp"

#include "fairpoi/error.hpp"
#include "fairpoi/geo.hpp"

namespace fairpoi::rec {

namespace {
using nlohmann::json;

constexpr int kModelFormatVersion = 1;
constexpr double kComponentFloor = 1e-12;
constexpr double kGeoBinKm = 0.1;
constexpr double kGeoMinDistKm = 0.05;
constexpr std::size_t kGeoMaxVisitedForPairs = 200;

// Min-max to [0, 1]; a constant vector maps to 0.5 everywhere.
void normalize01(std::vector<double>& v) {
  if (v.empty()) return;
  const auto [mn, mx] = std::minmax_element(v.begin(), v.end());
  if (*mx == *mn) {
    std::fill(v.begin(), v.end(), 0.5);
    return;
  }
  const double lo = *mn, range = *mx - *mn;
  for (double& x : v) x = (x - lo) / range;
}

}  // namespace

std::string kind_name(ModelKind k) {
  switch (k) {
    case ModelKind::Popularity: return "popularity";
    case ModelKind::Usg: return "usg";
    case ModelKind::GeoSoCa: return "geosoca";
    case ModelKind::Lore: return "lore";
  }
  return "popularity";
}

ModelKind kind_from_name(const std::string& name) {
  if (name == "popularity") return ModelKind::Popularity;
  if (name == "usg") return ModelKind::Usg;
  if (name == "geosoca") return ModelKind::GeoSoCa;
  if (name == "lore") return ModelKind::Lore;
  throw ConfigError("unknown model kind '" + name +
                    "' (expected popularity, usg, geosoca or lore)");
}

CheckinMatrix CheckinMatrix::build(const Dataset& train) {
  CheckinMatrix m;
  m.users.assign(train.users.begin(), train.users.end());
  for (const auto& [id, poi] : train.pois) m.pois.push_back(id);
  for (std::size_t i = 0; i < m.users.size(); ++i) m.user_index[m.users[i]] = i;
  for (std::size_t i = 0; i < m.pois.size(); ++i) m.poi_index[m.pois[i]] = i;

  std::vector<std::map<std::size_t, std::uint32_t>> acc(m.users.size());
  m.poi_counts.assign(m.pois.size(), 0);
  for (const auto& c : train.checkins) {
    const std::size_t u = m.user_index.at(c.user_id);
    const std::size_t p = m.poi_index.at(c.poi_id);
    ++acc[u][p];
    ++m.poi_counts[p];
  }
  m.rows.resize(m.users.size());
  for (std::size_t u = 0; u < acc.size(); ++u)
    m.rows[u].assign(acc[u].begin(), acc[u].end());
  return m;
}

std::uint32_t CheckinMatrix::count(std::size_t user, std::size_t poi) const {
  const auto& row = rows[user];
  auto it = std::lower_bound(row.begin(), row.end(), poi,
                             [](const auto& e, std::size_t p) { return e.first < p; });
  return it != row.end() && it->first == poi ? it->second : 0;
}

BaseModel BaseModel::train(ModelKind kind, const Dataset& train,
                           const SocialGraph& social, TrainParams params) {
  if (params.usg_social_weight < 0 || params.usg_geo_weight < 0 ||
      params.usg_social_weight + params.usg_geo_weight > 1.0)
    throw ConfigError("usg weights must be non-negative and sum to at most 1");

  BaseModel m;
  m.kind_ = kind;
  m.params_ = params;
  m.matrix_ = CheckinMatrix::build(train);

  m.friends_.resize(m.matrix_.users.size());
  for (const auto& [a, b] : social.edges) {
    const auto ia = m.matrix_.user_index.find(a);
    const auto ib = m.matrix_.user_index.find(b);
    if (ia == m.matrix_.user_index.end() || ib == m.matrix_.user_index.end()) continue;
    m.friends_[ia->second].push_back(ib->second);
    m.friends_[ib->second].push_back(ia->second);
  }
  for (auto& f : m.friends_) std::sort(f.begin(), f.end());

  m.poi_coords_.resize(m.matrix_.pois.size());
  m.poi_category_.resize(m.matrix_.pois.size());
  for (std::size_t p = 0; p < m.matrix_.pois.size(); ++p) {
    const auto& poi = train.pois.at(m.matrix_.pois[p]);
    m.poi_coords_[p] = {poi.latitude, poi.longitude};
    m.poi_category_[p] = poi.category_id.value_or("");
  }

  if (kind == ModelKind::GeoSoCa) {
    if (!train.has_categories()) {
      if (!params.allow_missing_categories)
        throw CapabilityError(
            "geosoca needs POI categories; none present in this dataset "
            "(set allow_missing_categories to score with a neutral category component)");
      m.use_categories_ = false;
    } else {
      m.use_categories_ = true;
    }
  }
  if (m.use_categories_ || kind == ModelKind::GeoSoCa || kind == ModelKind::Lore) {
    m.user_category_counts_.resize(m.matrix_.users.size());
    for (const auto& c : train.checkins) {
      const std::size_t u = m.matrix_.user_index.at(c.user_id);
      const std::size_t p = m.matrix_.poi_index.at(c.poi_id);
      ++m.category_popularity_[m.poi_category_[p]];
      ++m.user_category_counts_[u][m.poi_category_[p]];
    }
  }

  m.fit(train);
  return m;
}

void BaseModel::fit(const Dataset& train) {
  if (kind_ == ModelKind::Usg) {
    // Pool pairwise distances between each user's visited POIs, bin them,
    // and fit ln P(d) = a + b ln d over the non-empty bins.
    std::map<std::uint64_t, std::uint64_t> bins;
    std::uint64_t total = 0;
    for (std::size_t u = 0; u < matrix_.rows.size(); ++u) {
      const auto& row = matrix_.rows[u];
      const std::size_t step =
          row.size() > kGeoMaxVisitedForPairs ? row.size() / kGeoMaxVisitedForPairs + 1 : 1;
      for (std::size_t i = 0; i < row.size(); i += step) {
        for (std::size_t j = i + step; j < row.size(); j += step) {
          const auto& [lat1, lon1] = poi_coords_[row[i].first];
          const auto& [lat2, lon2] = poi_coords_[row[j].first];
          const double d = haversine_km(lat1, lon1, lat2, lon2);
          const auto key = std::max<std::uint64_t>(
              1, static_cast<std::uint64_t>(std::llround(d / kGeoBinKm)));
          ++bins[key];
          ++total;
        }
      }
    }
    if (bins.size() >= 2 && total > 0) {
      double mx = 0, my = 0;
      std::vector<std::pair<double, double>> pts;
      for (const auto& [key, n] : bins) {
        const double lx = std::log(static_cast<double>(key) * kGeoBinKm);
        const double ly =
            std::log(static_cast<double>(n) / static_cast<double>(total));
        pts.emplace_back(lx, ly);
        mx += lx;
        my += ly;
      }
      mx /= static_cast<double>(pts.size());
      my /= static_cast<double>(pts.size());
      double sxx = 0, sxy = 0;
      for (const auto& [lx, ly] : pts) {
        sxx += (lx - mx) * (lx - mx);
        sxy += (lx - mx) * (ly - my);
      }
      if (sxx > 0) {
        geo_b_ = sxy / sxx;
        geo_a_ = my - geo_b_ * mx;
        geo_fitted_ = true;
      }
    }
  }

  if (kind_ == ModelKind::Lore) {
    // Time-ordered train sequences; ties resolved as in the splitter.
    std::vector<std::vector<std::pair<std::int64_t, std::size_t>>> seq(matrix_.users.size());
    for (const auto& c : train.checkins) {
      seq[matrix_.user_index.at(c.user_id)].emplace_back(
          c.timestamp, matrix_.poi_index.at(c.poi_id));
    }
    user_sequence_.resize(matrix_.users.size());
    user_trans_.resize(matrix_.users.size());
    std::vector<std::map<std::size_t, std::uint64_t>> global_counts(matrix_.pois.size());
    for (std::size_t u = 0; u < seq.size(); ++u) {
      auto& s = seq[u];
      std::stable_sort(s.begin(), s.end(), [&](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first < b.first;
        return matrix_.pois[a.second] < matrix_.pois[b.second];
      });
      user_sequence_[u].reserve(s.size());
      for (const auto& [t, p] : s) user_sequence_[u].push_back(p);
      std::map<std::size_t, std::map<std::size_t, std::uint64_t>> counts;
      for (std::size_t i = 0; i + 1 < s.size(); ++i) {
        ++counts[s[i].second][s[i + 1].second];
        ++global_counts[s[i].second][s[i + 1].second];
      }
      for (const auto& [from, tos] : counts) {
        double row_total = 0;
        for (const auto& [to, n] : tos) row_total += static_cast<double>(n);
        auto& row = user_trans_[u][from];
        for (const auto& [to, n] : tos) row[to] = static_cast<double>(n) / row_total;
      }
    }
    global_trans_.resize(matrix_.pois.size());
    for (std::size_t p = 0; p < global_counts.size(); ++p) {
      double row_total = 0;
      for (const auto& [to, n] : global_counts[p]) row_total += static_cast<double>(n);
      if (row_total == 0) continue;
      global_trans_[p].reserve(global_counts[p].size());
      for (const auto& [to, n] : global_counts[p])
        global_trans_[p].emplace_back(to, static_cast<double>(n) / row_total);
    }
  }
}

namespace {

double cosine_binary(const std::vector<std::pair<std::size_t, std::uint32_t>>& a,
                     const std::vector<std::pair<std::size_t, std::uint32_t>>& b) {
  if (a.empty() || b.empty()) return 0.0;
  std::size_t i = 0, j = 0, common = 0;
  while (i < a.size() && j < b.size()) {
    if (a[i].first == b[j].first) {
      ++common;
      ++i;
      ++j;
    } else if (a[i].first < b[j].first) {
      ++i;
    } else {
      ++j;
    }
  }
  return static_cast<double>(common) /
         (std::sqrt(static_cast<double>(a.size())) * std::sqrt(static_cast<double>(b.size())));
}

double jaccard_sorted(const std::vector<std::size_t>& a, const std::vector<std::size_t>& b) {
  if (a.empty() && b.empty()) return 0.0;
  std::size_t i = 0, j = 0, common = 0;
  while (i < a.size() && j < b.size()) {
    if (a[i] == b[j]) {
      ++common;
      ++i;
      ++j;
    } else if (a[i] < b[j]) {
      ++i;
    } else {
      ++j;
    }
  }
  return static_cast<double>(common) /
         static_cast<double>(a.size() + b.size() - common);
}

}  // namespace

std::vector<double> BaseModel::component_cf(std::size_t u) const {
  const std::size_t nu = matrix_.users.size();
  std::vector<double> sim(nu, 0.0);
  const auto& my_row = matrix_.rows[u];
  if (!my_row.empty()) {
    const double norm_u = std::sqrt(static_cast<double>(my_row.size()));
    for (std::size_t v = 0; v < nu; ++v) {
      if (v == u || matrix_.rows[v].empty()) continue;
      std::size_t i = 0, j = 0, c = 0;
      const auto& rv = matrix_.rows[v];
      while (i < my_row.size() && j < rv.size()) {
        if (my_row[i].first == rv[j].first) {
          ++c;
          ++i;
          ++j;
        } else if (my_row[i].first < rv[j].first) {
          ++i;
        } else {
          ++j;
        }
      }
      if (c > 0)
        sim[v] = static_cast<double>(c) /
                 (norm_u * std::sqrt(static_cast<double>(rv.size())));
    }
  }

  std::vector<double> score(matrix_.pois.size(), 0.0);
  for (std::size_t v = 0; v < nu; ++v) {
    if (sim[v] <= 0.0) continue;
    for (const auto& [p, cnt] : matrix_.rows[v]) score[p] += sim[v];
  }
  return score;
}

std::vector<double> BaseModel::component_soc(std::size_t u) const {
  std::vector<double> score(matrix_.pois.size(), 0.0);
  const auto& my_friends = friends_[u];
  for (std::size_t v : my_friends) {
    const double blended = 0.5 * cosine_binary(matrix_.rows[u], matrix_.rows[v]) +
                           0.5 * jaccard_sorted(my_friends, friends_[v]);
    if (blended <= 0.0) continue;
    for (const auto& [p, cnt] : matrix_.rows[v]) score[p] += blended;
  }
  return score;
}

std::vector<double> BaseModel::component_geo(std::size_t u) const {
  std::vector<double> score(matrix_.pois.size(), 0.0);
  if (!geo_fitted_) return score;
  const auto& row = matrix_.rows[u];
  if (row.empty()) return score;
  for (std::size_t p = 0; p < matrix_.pois.size(); ++p) {
    double log_sum = 0.0;
    for (const auto& [q, cnt] : row) {
      const double d = std::max(
          kGeoMinDistKm, haversine_km(poi_coords_[p].first, poi_coords_[p].second,
                                      poi_coords_[q].first, poi_coords_[q].second));
      const double prob =
          std::clamp(std::exp(geo_a_ + geo_b_ * std::log(d)), kComponentFloor, 1.0);
      log_sum += std::log(prob);
    }
    score[p] = log_sum;
  }
  return score;
}

std::vector<double> BaseModel::component_kde(std::size_t u) const {
  std::vector<double> score(matrix_.pois.size(), 0.0);
  const auto& row = matrix_.rows[u];
  if (row.empty()) return score;

  double mlat = 0, mlon = 0;
  for (const auto& [p, cnt] : row) {
    mlat += poi_coords_[p].first;
    mlon += poi_coords_[p].second;
  }
  const double n = static_cast<double>(row.size());
  mlat /= n;
  mlon /= n;
  double vlat = 0, vlon = 0;
  for (const auto& [p, cnt] : row) {
    vlat += (poi_coords_[p].first - mlat) * (poi_coords_[p].first - mlat);
    vlon += (poi_coords_[p].second - mlon) * (poi_coords_[p].second - mlon);
  }
  // Std-dev bandwidth rule (Scott's factor for d = 2), floored so a
  // single-point or co-located visit set still yields finite kernels.
  const double factor = std::pow(n, -1.0 / 6.0);
  const double hlat = std::max(std::sqrt(vlat / n), 1e-4) * factor;
  const double hlon = std::max(std::sqrt(vlon / n), 1e-4) * factor;

  for (std::size_t p = 0; p < matrix_.pois.size(); ++p) {
    double acc = 0.0;
    for (const auto& [q, cnt] : row) {
      const double dlat = (poi_coords_[p].first - poi_coords_[q].first) / hlat;
      const double dlon = (poi_coords_[p].second - poi_coords_[q].second) / hlon;
      acc += std::exp(-0.5 * (dlat * dlat + dlon * dlon));
    }
    score[p] = acc / n;
  }
  return score;
}

std::vector<double> BaseModel::component_social_count(std::size_t u) const {
  std::vector<double> score(matrix_.pois.size(), 1.0);  // +1 smoothing
  for (std::size_t v : friends_[u]) {
    for (const auto& [p, cnt] : matrix_.rows[v]) score[p] += static_cast<double>(cnt);
  }
  return score;
}

std::vector<double> BaseModel::component_category(std::size_t u) const {
  std::vector<double> score(matrix_.pois.size(), 0.0);
  const auto& mine = user_category_counts_[u];
  for (std::size_t p = 0; p < matrix_.pois.size(); ++p) {
    const auto& cat = poi_category_[p];
    const auto uit = mine.find(cat);
    const double affinity = 1.0 + (uit == mine.end() ? 0.0 : static_cast<double>(uit->second));
    const auto git = category_popularity_.find(cat);
    const double pop = 1.0 + (git == category_popularity_.end()
                                  ? 0.0
                                  : static_cast<double>(git->second));
    score[p] = affinity * pop;
  }
  return score;
}

std::vector<double> BaseModel::component_seq(std::size_t u) const {
  std::vector<double> score(matrix_.pois.size(), 0.0);
  const auto& seq = user_sequence_[u];
  if (seq.empty()) return score;
  const auto& mine = user_trans_[u];
  for (std::size_t from : seq) {
    const auto uit = mine.find(from);
    if (uit != mine.end()) {
      for (const auto& [to, prob] : uit->second) score[to] += 0.5 * prob;
    }
    for (const auto& [to, prob] : global_trans_[from]) score[to] += 0.5 * prob;
  }
  const double n = static_cast<double>(seq.size());
  for (double& s : score) s /= n;
  return score;
}

ScoredCandidates BaseModel::score_candidates(const UserId& user) const {
  const auto uit = matrix_.user_index.find(user);
  if (uit == matrix_.user_index.end()) throw DataError("unknown user '" + user + "'");
  const std::size_t u = uit->second;

  std::vector<bool> visited(matrix_.pois.size(), false);
  for (const auto& [p, cnt] : matrix_.rows[u]) visited[p] = true;
  std::vector<std::size_t> candidates;
  candidates.reserve(matrix_.pois.size() - matrix_.rows[u].size());
  for (std::size_t p = 0; p < matrix_.pois.size(); ++p)
    if (!visited[p]) candidates.push_back(p);

  ScoredCandidates out;
  out.user_id = user;
  if (candidates.empty()) return out;

  auto restrict = [&](const std::vector<double>& full) {
    std::vector<double> v(candidates.size());
    for (std::size_t i = 0; i < candidates.size(); ++i) v[i] = full[candidates[i]];
    return v;
  };
  auto floored = [](const std::vector<double>& v, std::size_t i) {
    return std::max(v[i], kComponentFloor);
  };

  std::vector<double> raw(candidates.size(), 0.0);
  switch (kind_) {
    case ModelKind::Popularity: {
      for (std::size_t i = 0; i < candidates.size(); ++i)
        raw[i] = static_cast<double>(matrix_.poi_counts[candidates[i]]);
      break;
    }
    case ModelKind::Usg: {
      auto cf = restrict(component_cf(u));
      auto soc = restrict(component_soc(u));
      auto geo = restrict(component_geo(u));
      normalize01(cf);
      normalize01(soc);
      normalize01(geo);
      const double ws = params_.usg_social_weight, wg = params_.usg_geo_weight;
      for (std::size_t i = 0; i < candidates.size(); ++i)
        raw[i] = (1.0 - ws - wg) * cf[i] + ws * soc[i] + wg * geo[i];
      break;
    }
    case ModelKind::GeoSoCa: {
      auto g = restrict(component_kde(u));
      auto s = restrict(component_social_count(u));
      normalize01(g);
      normalize01(s);
      std::vector<double> c;
      if (use_categories_) {
        c = restrict(component_category(u));
        normalize01(c);
      }
      for (std::size_t i = 0; i < candidates.size(); ++i) {
        raw[i] = floored(g, i) * floored(s, i);
        if (use_categories_) raw[i] *= floored(c, i);
      }
      break;
    }
    case ModelKind::Lore: {
      auto seq = restrict(component_seq(u));
      auto g = restrict(component_kde(u));
      auto s = restrict(component_social_count(u));
      normalize01(seq);
      normalize01(g);
      normalize01(s);
      for (std::size_t i = 0; i < candidates.size(); ++i)
        raw[i] = floored(seq, i) * floored(g, i) * floored(s, i);
      break;
    }
  }

  normalize01(raw);
  out.entries.reserve(candidates.size());
  for (std::size_t i = 0; i < candidates.size(); ++i)
    out.entries.emplace_back(matrix_.pois[candidates[i]], raw[i]);
  return out;
}

std::string BaseModel::to_json() const {
  json j;
  j["format"] = "fairpoi-model";
  j["version"] = kModelFormatVersion;
  j["kind"] = kind_name(kind_);
  j["params"]["usg_social_weight"] = params_.usg_social_weight;
  j["params"]["usg_geo_weight"] = params_.usg_geo_weight;
  j["params"]["allow_missing_categories"] = params_.allow_missing_categories;
  j["fitted"]["geo_fitted"] = geo_fitted_;
  j["fitted"]["geo_a"] = geo_a_;
  j["fitted"]["geo_b"] = geo_b_;
  return j.dump(2);
}

BaseModel BaseModel::from_json(const std::string& text, const Dataset& train_data,
                               const SocialGraph& social) {
  json j = json::parse(text);
  if (j.value("format", "") != "fairpoi-model")
    throw DataError("not a base model document");
  if (j.value("version", 0) != kModelFormatVersion)
    throw DataError("unsupported base model version");
  TrainParams params;
  params.usg_social_weight = j.at("params").at("usg_social_weight").get<double>();
  params.usg_geo_weight = j.at("params").at("usg_geo_weight").get<double>();
  params.allow_missing_categories =
      j.at("params").at("allow_missing_categories").get<bool>();
  BaseModel m = BaseModel::train(kind_from_name(j.at("kind").get<std::string>()),
                                 train_data, social, params);
  m.geo_fitted_ = j.at("fitted").at("geo_fitted").get<bool>();
  m.geo_a_ = j.at("fitted").at("geo_a").get<double>();
  m.geo_b_ = j.at("fitted").at("geo_b").get<double>();
  return m;
}

RecommendationList top_k(const ScoredCandidates& s, std::size_t k) {
  if (k == 0) throw ConfigError("top_k: k must be >= 1");
  std::vector<std::pair<PoiId, double>> sorted = s.entries;
  std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  RecommendationList out;
  out.user_id = s.user_id;
  const std::size_t take = std::min(k, sorted.size());
  out.ranked.assign(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(take));
  out.short_list = take < k;
  return out;
}

}  // namespace fairpoi::rec
