#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "fairpoi/types.hpp"

namespace fairpoi::rec {

enum class ModelKind { Popularity, Usg, GeoSoCa, Lore };

std::string kind_name(ModelKind k);
ModelKind kind_from_name(const std::string& name);

// Train-split interactions as a sparse user x POI count matrix with stable
// integer indexing (both axes sorted by id). The binary view is count > 0.
struct CheckinMatrix {
  std::vector<UserId> users;
  std::vector<PoiId> pois;
  std::map<UserId, std::size_t> user_index;
  std::map<PoiId, std::size_t> poi_index;
  // Per-user rows sorted by POI index.
  std::vector<std::vector<std::pair<std::size_t, std::uint32_t>>> rows;
  std::vector<std::uint64_t> poi_counts;  // train popularity per POI

  static CheckinMatrix build(const Dataset& train);
  std::uint32_t count(std::size_t user, std::size_t poi) const;
};

struct TrainParams {
  double usg_social_weight = 0.1;
  double usg_geo_weight = 0.1;
  // GeoSoCa on a dataset without categories is a capability error unless
  // this is set, in which case the category component is all-ones.
  bool allow_missing_categories = false;

  friend bool operator==(const TrainParams&, const TrainParams&) = default;
};

// Base-model scores for one user over every POI the user has not visited in
// train, min-max normalized to [0, 1] (constant raw scores map to 0.5).
struct ScoredCandidates {
  UserId user_id;
  std::vector<std::pair<PoiId, double>> entries;  // sorted by poi_id
};

struct RecommendationList {
  UserId user_id;
  std::vector<std::pair<PoiId, double>> ranked;  // score desc, poi_id asc
  bool short_list = false;  // fewer candidates than k existed
};

// The four contextual baselines. Scoring is deterministic and the model is
// immutable once trained; instances can score users from multiple threads.
//
// Simplified forms (full-fidelity reproduction of the cited systems is a
// non-goal):
//   Popularity  score ~ train check-in count.
//   USG         (1-ws-wg)*CF + ws*SOC + wg*GEO, components min-max
//               normalized per user. CF: cosine user-based CF on the binary
//               matrix. SOC: CF restricted to friends with similarity
//               0.5*cosine + 0.5*friend-overlap Jaccard. GEO: power-law
//               distance model fit on pooled pairwise distances between
//               visited POIs; candidate score is the log-sum of modeled
//               probabilities to the user's visited POIs.
//   GeoSoCa     G*S*C. G: Gaussian KDE over the user's visited coordinates
//               (per-user std-dev bandwidth). S: friend check-in count of
//               the candidate, +1 smoothed. C: category affinity times
//               category popularity, +1 smoothed.
//   LORE        SEQ*G*S, G and S as in GeoSoCa. SEQ: first-order Markov
//               transition score averaged over the user's train sequence,
//               blended equally with the global transition matrix.
// Components are floored at 1e-12 before products.
class BaseModel {
 public:
  static BaseModel train(ModelKind kind, const Dataset& train,
                         const SocialGraph& social, TrainParams params = {});

  ModelKind kind() const { return kind_; }
  const TrainParams& params() const { return params_; }
  const CheckinMatrix& matrix() const { return matrix_; }

  ScoredCandidates score_candidates(const UserId& user) const;

  // Versioned JSON with exact float round-trip. from_json re-derives the
  // matrix and transition structure from the dataset and overrides the
  // fitted floats from the document.
  std::string to_json() const;
  static BaseModel from_json(const std::string& text, const Dataset& train,
                             const SocialGraph& social);

 private:
  BaseModel() = default;
  void fit(const Dataset& train);

  ModelKind kind_ = ModelKind::Popularity;
  TrainParams params_;
  CheckinMatrix matrix_;
  std::vector<std::vector<std::size_t>> friends_;  // adjacency by user index

  // USG geo model: ln P(d) = geo_a_ + geo_b_ * ln d (d in km).
  bool geo_fitted_ = false;
  double geo_a_ = 0.0;
  double geo_b_ = 0.0;

  // GeoSoCa/LORE data.
  std::vector<std::pair<double, double>> poi_coords_;        // by poi index
  std::vector<std::string> poi_category_;                    // "" when absent
  bool use_categories_ = false;
  std::map<std::string, std::uint64_t> category_popularity_;
  std::vector<std::map<std::string, std::uint64_t>> user_category_counts_;

  // LORE transition rows: poi -> [(next poi, probability)].
  std::vector<std::vector<std::pair<std::size_t, double>>> global_trans_;
  std::vector<std::map<std::size_t, std::map<std::size_t, double>>> user_trans_;
  std::vector<std::vector<std::size_t>> user_sequence_;  // time-ordered train POIs

  std::vector<double> component_cf(std::size_t u) const;
  std::vector<double> component_soc(std::size_t u) const;
  std::vector<double> component_geo(std::size_t u) const;
  std::vector<double> component_kde(std::size_t u) const;
  std::vector<double> component_social_count(std::size_t u) const;
  std::vector<double> component_category(std::size_t u) const;
  std::vector<double> component_seq(std::size_t u) const;
};

// The k highest-scored candidates, ties broken by poi_id ascending. Fewer
// than k candidates yields all of them with short_list set.
RecommendationList top_k(const ScoredCandidates& s, std::size_t k);

}  // namespace fairpoi::rec
