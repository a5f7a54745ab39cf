#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace fairpoi {

using UserId = std::string;
using PoiId = std::string;

struct CheckIn {
  UserId user_id;
  PoiId poi_id;
  std::int64_t timestamp = 0;  // seconds since epoch

  friend bool operator==(const CheckIn&, const CheckIn&) = default;
};

struct Poi {
  PoiId poi_id;
  double latitude = 0.0;   // degrees, [-90, 90]
  double longitude = 0.0;  // degrees, (-180, 180]
  std::optional<std::string> category_id;

  friend bool operator==(const Poi&, const Poi&) = default;
};

// Undirected friendship graph. Edges are stored with endpoints ordered so
// mirrored pairs collapse to one entry; self-loops are rejected at ingest.
struct SocialGraph {
  std::set<std::pair<UserId, UserId>> edges;

  void add_edge(UserId a, UserId b) {
    if (a == b) return;
    if (b < a) std::swap(a, b);
    edges.emplace(std::move(a), std::move(b));
  }

  bool has_edge(const UserId& a, const UserId& b) const {
    return a <= b ? edges.count({a, b}) > 0 : edges.count({b, a}) > 0;
  }

  std::vector<UserId> friends_of(const UserId& u) const {
    std::vector<UserId> out;
    for (const auto& [a, b] : edges) {
      if (a == u) out.push_back(b);
      else if (b == u) out.push_back(a);
    }
    return out;
  }
};

// Ordered containers keep iteration deterministic; every consumer of a
// Dataset relies on that for reproducible output.
struct Dataset {
  std::set<UserId> users;
  std::map<PoiId, Poi> pois;
  std::vector<CheckIn> checkins;
  SocialGraph social;

  bool has_categories() const {
    for (const auto& [id, poi] : pois) {
      if (poi.category_id) return true;
    }
    return false;
  }
};

// Train/validation/test share the users/pois/social tables; only the
// check-in lists differ.
struct SplitDataset {
  Dataset train;
  Dataset validation;
  Dataset test;
};

enum class UserGroup { Active, Inactive };
enum class ItemGroup { ShortHead, LongTail };

struct GroupAssignment {
  std::map<UserId, UserGroup> user_group;
  std::map<PoiId, ItemGroup> item_group;

  bool is_active(const UserId& u) const {
    auto it = user_group.find(u);
    return it != user_group.end() && it->second == UserGroup::Active;
  }
  bool is_short_head(const PoiId& p) const {
    auto it = item_group.find(p);
    return it != item_group.end() && it->second == ItemGroup::ShortHead;
  }
};

struct SyntheticConfig {
  std::size_t n_users = 100;
  std::size_t n_pois = 200;
  double power_law_exponent = -1.5;  // must be negative
  std::size_t n_geo_clusters = 3;
  double mean_checkins_per_user = 30.0;
  double social_edge_probability = 0.02;
  std::uint64_t rng_seed = 1;
};

struct StatsSummary {
  std::size_t users = 0;
  std::size_t pois = 0;
  std::size_t checkins = 0;
  double sparsity = 0.0;  // checkins / (users * pois)
  std::size_t active_users = 0;
  std::size_t inactive_users = 0;
  std::size_t short_head_pois = 0;
  std::size_t long_tail_pois = 0;
  std::size_t active_checkins = 0;
  std::size_t inactive_checkins = 0;
  std::size_t short_head_checkins = 0;
  std::size_t long_tail_checkins = 0;
};

}  // namespace fairpoi
