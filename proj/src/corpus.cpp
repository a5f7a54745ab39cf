#include "fairpoi/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "fairpoi/error.hpp"
#include "fairpoi/geo.hpp"
#include "fairpoi/rng.hpp"

namespace fairpoi::corpus {

namespace {

std::vector<std::string> split_fields(const std::string& line, char delim) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, delim)) out.push_back(field);
  if (!line.empty() && line.back() == delim) out.emplace_back();
  return out;
}

std::string trim(std::string s) {
  auto issp = [](unsigned char c) { return std::isspace(c) != 0; };
  while (!s.empty() && issp(s.back())) s.pop_back();
  std::size_t i = 0;
  while (i < s.size() && issp(static_cast<unsigned char>(s[i]))) ++i;
  return s.substr(i);
}

bool parse_i64(const std::string& s, std::int64_t& out) {
  const char* b = s.data();
  const char* e = b + s.size();
  auto [p, ec] = std::from_chars(b, e, out);
  return ec == std::errc() && p == e && !s.empty();
}

bool parse_double(const std::string& s, double& out) {
  if (s.empty()) return false;
  try {
    std::size_t pos = 0;
    out = std::stod(s, &pos);
    return pos == s.size();
  } catch (...) {
    return false;
  }
}

// Days since 1970-01-01 for a proleptic Gregorian date (Howard Hinnant's
// days_from_civil), so date parsing never depends on the host time zone.
std::int64_t days_from_civil(std::int64_t y, unsigned m, unsigned d) {
  y -= m <= 2;
  const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

// Accepts "YYYY-MM-DD" optionally followed by "THH:MM:SS" or " HH:MM:SS",
// with an optional trailing "Z". Interpreted as UTC.
bool parse_iso8601(const std::string& s, std::int64_t& out) {
  if (s.size() < 10 || s[4] != '-' || s[7] != '-') return false;
  auto num = [&](std::size_t pos, std::size_t len, std::int64_t& v) {
    v = 0;
    for (std::size_t i = pos; i < pos + len; ++i) {
      if (i >= s.size() || !std::isdigit(static_cast<unsigned char>(s[i]))) return false;
      v = v * 10 + (s[i] - '0');
    }
    return true;
  };
  std::int64_t y, mo, d, h = 0, mi = 0, sec = 0;
  if (!num(0, 4, y) || !num(5, 2, mo) || !num(8, 2, d)) return false;
  if (mo < 1 || mo > 12 || d < 1 || d > 31) return false;
  std::size_t rest = 10;
  if (s.size() > rest) {
    if (s[rest] != 'T' && s[rest] != ' ') return false;
    if (s.size() < rest + 9 || s[rest + 3] != ':' || s[rest + 6] != ':') return false;
    if (!num(rest + 1, 2, h) || !num(rest + 4, 2, mi) || !num(rest + 7, 2, sec)) return false;
    rest += 9;
    if (rest < s.size() && s[rest] == 'Z') ++rest;
    if (rest != s.size()) return false;
  }
  out = days_from_civil(y, static_cast<unsigned>(mo), static_cast<unsigned>(d)) * 86400 +
        h * 3600 + mi * 60 + sec;
  return true;
}

bool parse_timestamp(const std::string& s, std::int64_t& out) {
  return parse_i64(s, out) || parse_iso8601(s, out);
}

[[noreturn]] void row_error(const std::filesystem::path& file, std::size_t line,
                            std::size_t column, const std::string& what) {
  throw DataError(file.string() + ":" + std::to_string(line) + ": column " +
                  std::to_string(column) + ": " + what);
}

std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

}  // namespace

Dataset load_dataset(const std::filesystem::path& checkin_path,
                     const std::filesystem::path& poi_path,
                     const std::optional<std::filesystem::path>& social_path,
                     Delimiter delim) {
  const char dc = delimiter_char(delim);
  Dataset d;

  // POIs first so check-in references can be resolved as they are read.
  {
    const auto lines = read_lines(poi_path);
    for (std::size_t i = 0; i < lines.size(); ++i) {
      if (trim(lines[i]).empty()) continue;
      auto f = split_fields(lines[i], dc);
      if (f.size() < 3 || f.size() > 4)
        row_error(poi_path, i + 1, f.size(), "expected poi_id, latitude, longitude[, category_id]");
      Poi poi;
      poi.poi_id = trim(f[0]);
      double lat, lon;
      if (!parse_double(trim(f[1]), lat)) {
        if (i == 0) continue;  // header row
        row_error(poi_path, i + 1, 2, "latitude is not a number: '" + trim(f[1]) + "'");
      }
      if (!parse_double(trim(f[2]), lon))
        row_error(poi_path, i + 1, 3, "longitude is not a number: '" + trim(f[2]) + "'");
      if (lat < -90.0 || lat > 90.0)
        row_error(poi_path, i + 1, 2, "latitude out of [-90, 90]");
      if (lon <= -180.0 || lon > 180.0)
        row_error(poi_path, i + 1, 3, "longitude out of (-180, 180]");
      poi.latitude = lat;
      poi.longitude = lon;
      if (f.size() == 4 && !trim(f[3]).empty()) poi.category_id = trim(f[3]);
      if (poi.poi_id.empty()) row_error(poi_path, i + 1, 1, "empty poi_id");
      d.pois[poi.poi_id] = std::move(poi);
    }
  }

  {
    const auto lines = read_lines(checkin_path);
    for (std::size_t i = 0; i < lines.size(); ++i) {
      if (trim(lines[i]).empty()) continue;
      auto f = split_fields(lines[i], dc);
      if (f.size() != 3)
        row_error(checkin_path, i + 1, f.size(), "expected user_id, poi_id, timestamp");
      CheckIn c;
      c.user_id = trim(f[0]);
      c.poi_id = trim(f[1]);
      if (!parse_timestamp(trim(f[2]), c.timestamp)) {
        if (i == 0) continue;  // header row
        row_error(checkin_path, i + 1, 3,
                  "timestamp is neither epoch seconds nor ISO-8601: '" + trim(f[2]) + "'");
      }
      if (c.timestamp < 0) row_error(checkin_path, i + 1, 3, "timestamp < 0");
      if (c.user_id.empty()) row_error(checkin_path, i + 1, 1, "empty user_id");
      if (!d.pois.count(c.poi_id))
        throw DataError(checkin_path.string() + ":" + std::to_string(i + 1) +
                        ": check-in references unknown POI '" + c.poi_id + "'");
      d.users.insert(c.user_id);
      d.checkins.push_back(std::move(c));
    }
  }

  if (social_path) {
    const auto lines = read_lines(*social_path);
    for (std::size_t i = 0; i < lines.size(); ++i) {
      if (trim(lines[i]).empty()) continue;
      auto f = split_fields(lines[i], dc);
      if (f.size() != 2)
        row_error(*social_path, i + 1, f.size(), "expected user_id, friend_id");
      const std::string a = trim(f[0]), b = trim(f[1]);
      if (i == 0 && (a == "user_id" || b == "friend_id")) continue;  // header row
      // Edges touching users with no check-ins carry no signal here.
      if (!d.users.count(a) || !d.users.count(b)) continue;
      d.social.add_edge(a, b);
    }
  }

  return d;
}

namespace {

Dataset restrict_dataset(const Dataset& d, const std::set<UserId>& users,
                         const std::set<PoiId>& pois) {
  Dataset out;
  out.users = users;
  for (const auto& p : pois) out.pois[p] = d.pois.at(p);
  for (const auto& c : d.checkins) {
    if (users.count(c.user_id) && pois.count(c.poi_id)) out.checkins.push_back(c);
  }
  for (const auto& [a, b] : d.social.edges) {
    if (users.count(a) && users.count(b)) out.social.edges.emplace(a, b);
  }
  return out;
}

}  // namespace

Dataset filter_sparse(const Dataset& d, std::size_t min_users_per_poi,
                      std::size_t min_pois_per_user) {
  std::set<UserId> users = d.users;
  std::set<PoiId> pois;
  for (const auto& [id, poi] : d.pois) pois.insert(id);

  bool changed = true;
  while (changed) {
    changed = false;

    std::map<PoiId, std::set<UserId>> visitors;
    for (const auto& c : d.checkins) {
      if (users.count(c.user_id) && pois.count(c.poi_id))
        visitors[c.poi_id].insert(c.user_id);
    }
    for (auto it = pois.begin(); it != pois.end();) {
      const auto v = visitors.find(*it);
      const std::size_t n = v == visitors.end() ? 0 : v->second.size();
      if (n < min_users_per_poi) {
        it = pois.erase(it);
        changed = true;
      } else {
        ++it;
      }
    }

    std::map<UserId, std::set<PoiId>> visited;
    for (const auto& c : d.checkins) {
      if (users.count(c.user_id) && pois.count(c.poi_id))
        visited[c.user_id].insert(c.poi_id);
    }
    for (auto it = users.begin(); it != users.end();) {
      const auto v = visited.find(*it);
      const std::size_t n = v == visited.end() ? 0 : v->second.size();
      if (n < min_pois_per_user) {
        it = users.erase(it);
        changed = true;
      } else {
        ++it;
      }
    }
  }

  if (users.empty() || pois.empty())
    throw DataError("dataset fully filtered: no user/POI pair satisfies min_users_per_poi=" +
                    std::to_string(min_users_per_poi) + ", min_pois_per_user=" +
                    std::to_string(min_pois_per_user));

  return restrict_dataset(d, users, pois);
}

SplitDataset chronological_split(const Dataset& d, std::array<double, 3> fractions) {
  const double sum = fractions[0] + fractions[1] + fractions[2];
  if (std::abs(sum - 1.0) > 1e-9)
    throw ConfigError("split fractions must sum to 1, got " + std::to_string(sum));

  std::map<UserId, std::vector<CheckIn>> per_user;
  for (const auto& c : d.checkins) per_user[c.user_id].push_back(c);

  SplitDataset s;
  for (Dataset* part : {&s.train, &s.validation, &s.test}) {
    part->users = d.users;
    part->pois = d.pois;
    part->social = d.social;
  }

  for (auto& [user, list] : per_user) {
    std::stable_sort(list.begin(), list.end(), [](const CheckIn& a, const CheckIn& b) {
      if (a.timestamp != b.timestamp) return a.timestamp < b.timestamp;
      return a.poi_id < b.poi_id;
    });
    const std::size_t n = list.size();
    std::size_t n_train = static_cast<std::size_t>(std::ceil(fractions[0] * static_cast<double>(n)));
    std::size_t n_val = static_cast<std::size_t>(std::ceil(fractions[1] * static_cast<double>(n)));
    n_train = std::min(n_train, n);
    // Keep at least one check-in for test; shrink validation (then train).
    if (n >= 2 && n_train + n_val >= n) {
      n_val = n - n_train > 0 ? n - n_train - 1 : 0;
      if (n_train + n_val >= n && n_train > 0) n_train = n - n_val - 1;
    }
    for (std::size_t i = 0; i < n; ++i) {
      Dataset& dst = i < n_train ? s.train
                     : i < n_train + n_val ? s.validation
                                           : s.test;
      dst.checkins.push_back(list[i]);
    }
  }
  return s;
}

GroupAssignment assign_groups(const Dataset& train) {
  if (train.checkins.empty()) throw DataError("cannot assign groups on an empty train split");

  GroupAssignment g;

  std::map<UserId, std::size_t> user_count;
  for (const auto& u : train.users) user_count[u] = 0;
  std::map<PoiId, std::size_t> poi_count;
  for (const auto& [id, poi] : train.pois) poi_count[id] = 0;
  for (const auto& c : train.checkins) {
    ++user_count[c.user_id];
    ++poi_count[c.poi_id];
  }

  auto rank_top = [](const auto& counts, std::size_t n_top, auto mark_top, auto mark_rest) {
    std::vector<std::pair<std::string, std::size_t>> order(counts.begin(), counts.end());
    std::sort(order.begin(), order.end(), [](const auto& a, const auto& b) {
      if (a.second != b.second) return a.second > b.second;
      return a.first < b.first;
    });
    for (std::size_t i = 0; i < order.size(); ++i) {
      if (i < n_top) mark_top(order[i].first);
      else mark_rest(order[i].first);
    }
  };

  const auto n_active =
      static_cast<std::size_t>(std::ceil(0.2 * static_cast<double>(user_count.size())));
  rank_top(user_count, n_active,
           [&](const std::string& u) { g.user_group[u] = UserGroup::Active; },
           [&](const std::string& u) { g.user_group[u] = UserGroup::Inactive; });

  const auto n_short =
      static_cast<std::size_t>(std::ceil(0.2 * static_cast<double>(poi_count.size())));
  rank_top(poi_count, n_short,
           [&](const std::string& p) { g.item_group[p] = ItemGroup::ShortHead; },
           [&](const std::string& p) { g.item_group[p] = ItemGroup::LongTail; });

  return g;
}

namespace {

// Synthetic-world constants. Cluster centers live in a mid-latitude box far
// from the antimeridian; POIs and users scatter in uniform disks around
// them.
constexpr double kRegionCenterLat = 40.0;
constexpr double kRegionCenterLon = -74.0;
constexpr double kRegionHalfSpanDeg = 3.0;
constexpr double kClusterRadiusDeg = 0.1;
constexpr std::uint64_t kMaxPopularityWeight = 100;
constexpr double kLocalCheckinShare = 0.8;
constexpr int kSyntheticCategories = 8;

std::string padded_id(char prefix, std::size_t i, std::size_t width) {
  std::string digits = std::to_string(i);
  if (digits.size() < width) digits.insert(0, width - digits.size(), '0');
  return std::string(1, prefix) + digits;
}

std::pair<double, double> disk_point(SplitMix64& rng, double clat, double clon,
                                     double radius_deg) {
  const double r = radius_deg * std::sqrt(rng.next_double());
  const double theta = 2.0 * std::numbers::pi * rng.next_double();
  return {clat + r * std::cos(theta), clon + r * std::sin(theta)};
}

}  // namespace

Dataset generate_synthetic(const SyntheticConfig& cfg) {
  if (cfg.n_users < 1 || cfg.n_pois < 1 || cfg.n_geo_clusters < 1)
    throw ConfigError("synthetic counts must be >= 1");
  if (cfg.power_law_exponent >= 0.0)
    throw ConfigError("power_law_exponent must be negative");
  if (cfg.social_edge_probability < 0.0 || cfg.social_edge_probability > 1.0)
    throw ConfigError("social_edge_probability must be in [0, 1]");
  if (cfg.mean_checkins_per_user < 1.0)
    throw ConfigError("mean_checkins_per_user must be >= 1");

  SplitMix64 rng(cfg.rng_seed);
  Dataset d;

  std::vector<std::pair<double, double>> centers(cfg.n_geo_clusters);
  for (auto& [lat, lon] : centers) {
    lat = kRegionCenterLat + (rng.next_double() * 2.0 - 1.0) * kRegionHalfSpanDeg;
    lon = kRegionCenterLon + (rng.next_double() * 2.0 - 1.0) * kRegionHalfSpanDeg;
  }

  // Popularity weights: discrete power law over {1..W}.
  std::vector<double> weight_prefix(kMaxPopularityWeight);
  {
    double acc = 0.0;
    for (std::uint64_t x = 1; x <= kMaxPopularityWeight; ++x) {
      acc += std::pow(static_cast<double>(x), cfg.power_law_exponent);
      weight_prefix[x - 1] = acc;
    }
  }

  const std::size_t poi_width = std::to_string(cfg.n_pois).size();
  std::vector<double> poi_weight(cfg.n_pois);
  std::vector<std::size_t> poi_cluster(cfg.n_pois);
  std::vector<PoiId> poi_ids(cfg.n_pois);
  for (std::size_t i = 0; i < cfg.n_pois; ++i) {
    Poi poi;
    poi.poi_id = padded_id('p', i + 1, poi_width);
    const std::size_t cl = static_cast<std::size_t>(rng.next_below(cfg.n_geo_clusters));
    std::tie(poi.latitude, poi.longitude) =
        disk_point(rng, centers[cl].first, centers[cl].second, kClusterRadiusDeg);
    poi.category_id = "c" + std::to_string(rng.next_below(kSyntheticCategories));
    poi_weight[i] = static_cast<double>(1 + rng.pick_prefix(weight_prefix));
    poi_cluster[i] = cl;
    poi_ids[i] = poi.poi_id;
    d.pois[poi.poi_id] = std::move(poi);
  }

  // Per-cluster weight prefixes for locality-biased POI choice.
  std::vector<std::vector<std::size_t>> cluster_pois(cfg.n_geo_clusters);
  for (std::size_t i = 0; i < cfg.n_pois; ++i) cluster_pois[poi_cluster[i]].push_back(i);
  std::vector<std::vector<double>> cluster_prefix(cfg.n_geo_clusters);
  for (std::size_t c = 0; c < cfg.n_geo_clusters; ++c) {
    double acc = 0.0;
    for (std::size_t idx : cluster_pois[c]) {
      acc += poi_weight[idx];
      cluster_prefix[c].push_back(acc);
    }
  }
  std::vector<double> global_prefix(cfg.n_pois);
  {
    double acc = 0.0;
    for (std::size_t i = 0; i < cfg.n_pois; ++i) {
      acc += poi_weight[i];
      global_prefix[i] = acc;
    }
  }

  const std::size_t user_width = std::to_string(cfg.n_users).size();
  std::vector<UserId> user_ids(cfg.n_users);
  for (std::size_t i = 0; i < cfg.n_users; ++i) {
    user_ids[i] = padded_id('u', i + 1, user_width);
    d.users.insert(user_ids[i]);
  }

  for (std::size_t u = 0; u < cfg.n_users; ++u) {
    const std::size_t home = static_cast<std::size_t>(rng.next_below(cfg.n_geo_clusters));
    const std::uint64_t n_events =
        std::max<std::uint64_t>(1, rng.poisson(cfg.mean_checkins_per_user));
    std::int64_t t = 1'000'000 + static_cast<std::int64_t>(u) * 10'000'000;
    for (std::uint64_t e = 0; e < n_events; ++e) {
      std::size_t poi_idx;
      if (!cluster_pois[home].empty() && rng.next_double() < kLocalCheckinShare) {
        poi_idx = cluster_pois[home][rng.pick_prefix(cluster_prefix[home])];
      } else {
        poi_idx = rng.pick_prefix(global_prefix);
      }
      t += 1 + static_cast<std::int64_t>(rng.next_below(86'400));
      d.checkins.push_back({user_ids[u], poi_ids[poi_idx], t});
    }
  }

  if (cfg.social_edge_probability > 0.0) {
    for (std::size_t i = 0; i < cfg.n_users; ++i) {
      for (std::size_t j = i + 1; j < cfg.n_users; ++j) {
        if (rng.next_double() < cfg.social_edge_probability)
          d.social.add_edge(user_ids[i], user_ids[j]);
      }
    }
  }

  return d;
}

StatsSummary dataset_stats(const Dataset& d, const GroupAssignment& g) {
  StatsSummary s;
  s.users = d.users.size();
  s.pois = d.pois.size();
  s.checkins = d.checkins.size();
  s.sparsity = s.users && s.pois
                   ? static_cast<double>(s.checkins) /
                         (static_cast<double>(s.users) * static_cast<double>(s.pois))
                   : 0.0;
  for (const auto& [u, grp] : g.user_group)
    (grp == UserGroup::Active ? s.active_users : s.inactive_users) += 1;
  for (const auto& [p, grp] : g.item_group)
    (grp == ItemGroup::ShortHead ? s.short_head_pois : s.long_tail_pois) += 1;
  for (const auto& c : d.checkins) {
    if (g.is_active(c.user_id)) ++s.active_checkins;
    else ++s.inactive_checkins;
    if (g.is_short_head(c.poi_id)) ++s.short_head_checkins;
    else ++s.long_tail_checkins;
  }
  return s;
}

namespace {

std::vector<std::pair<std::string, std::string>> stats_pairs(const StatsSummary& s) {
  std::ostringstream sp;
  sp << s.sparsity;
  return {
      {"users", std::to_string(s.users)},
      {"pois", std::to_string(s.pois)},
      {"checkins", std::to_string(s.checkins)},
      {"sparsity", sp.str()},
      {"active_users", std::to_string(s.active_users)},
      {"inactive_users", std::to_string(s.inactive_users)},
      {"short_head_pois", std::to_string(s.short_head_pois)},
      {"long_tail_pois", std::to_string(s.long_tail_pois)},
      {"active_checkins", std::to_string(s.active_checkins)},
      {"inactive_checkins", std::to_string(s.inactive_checkins)},
      {"short_head_checkins", std::to_string(s.short_head_checkins)},
      {"long_tail_checkins", std::to_string(s.long_tail_checkins)},
  };
}

}  // namespace

std::string stats_to_text(const StatsSummary& s) {
  std::string out;
  for (const auto& [k, v] : stats_pairs(s)) out += k + "=" + v + "\n";
  return out;
}

std::string stats_to_json(const StatsSummary& s) {
  std::string out = "{";
  bool first = true;
  for (const auto& [k, v] : stats_pairs(s)) {
    if (!first) out += ",";
    first = false;
    out += "\"" + k + "\":" + v;
  }
  out += "}";
  return out;
}

void write_dataset(const Dataset& d, const std::filesystem::path& dir,
                   const std::string& prefix, Delimiter delim) {
  const char dc = delimiter_char(delim);
  std::filesystem::create_directories(dir);

  std::ofstream ck(dir / (prefix + "checkins.tsv"));
  for (const auto& c : d.checkins)
    ck << c.user_id << dc << c.poi_id << dc << c.timestamp << "\n";

  std::ofstream pf(dir / (prefix + "pois.tsv"));
  pf.precision(17);
  for (const auto& [id, poi] : d.pois) {
    pf << id << dc << poi.latitude << dc << poi.longitude;
    if (poi.category_id) pf << dc << *poi.category_id;
    pf << "\n";
  }

  std::ofstream sf(dir / (prefix + "social.tsv"));
  for (const auto& [a, b] : d.social.edges) sf << a << dc << b << "\n";
}

}  // namespace fairpoi::corpus
