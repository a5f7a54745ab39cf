#include <cmath>
#include <set>

#include "doctest.h"

#include "fairpoi/corpus.hpp"
#include "fairpoi/error.hpp"
#include "fairpoi/fairness.hpp"
#include "fairpoi/geo.hpp"
#include "fairpoi/rng.hpp"

using namespace fairpoi;
using fairness::ExposureFamily;
using fairness::ExposureModel;
using fairness::PopularityHistogram;

namespace {

constexpr double kKmPerDegLat = 111.19492664455873;  // R * pi / 180

Dataset poi_grid_dataset(const std::vector<std::pair<std::string, int>>& poi_counts) {
  // Each POI gets `count` check-ins, each from a distinct user.
  Dataset d;
  double lat = 0.0;
  std::int64_t t = 0;
  int uid = 0;
  for (const auto& [poi, count] : poi_counts) {
    d.pois[poi] = Poi{poi, lat, 0.0, {}};
    lat += 0.01;
    for (int i = 0; i < count; ++i) {
      const std::string u = "u" + std::to_string(++uid);
      d.users.insert(u);
      d.checkins.push_back({u, poi, ++t});
    }
  }
  return d;
}

// Closed-form OLS on log-log points, written independently of the library.
std::pair<double, double> ols_loglog(const std::vector<std::pair<double, double>>& xy) {
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double n = static_cast<double>(xy.size());
  for (const auto& [x, y] : xy) {
    const double lx = std::log(x), ly = std::log(y);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  const double b = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  const double a = (sy - b * sx) / n;
  return {std::exp(a), b};
}

PopularityHistogram random_histogram(SplitMix64& rng) {
  PopularityHistogram h;
  const std::size_t bins = 2 + rng.next_below(10);
  std::set<std::uint64_t> xs;
  while (xs.size() < bins) xs.insert(1 + rng.next_below(200));
  for (const auto x : xs) h.points.emplace_back(x, 1 + rng.next_below(400));
  h.zero_count = rng.next_below(5);
  return h;
}

}  // namespace

TEST_CASE("build_popularity_histogram bins counts and tracks zero-count POIs") {
  const Dataset d = poi_grid_dataset({{"A", 3}, {"B", 3}, {"C", 1}});
  const auto h = fairness::build_popularity_histogram(d);
  REQUIRE(h.points.size() == 2);
  CHECK(h.points[0] == std::pair<std::uint64_t, std::uint64_t>{1, 1});
  CHECK(h.points[1] == std::pair<std::uint64_t, std::uint64_t>{3, 2});
  CHECK(h.zero_count == 0);
  CHECK(h.total_pois() == 3);

  SUBCASE("all POIs with the same count collapse to one bin") {
    const Dataset e = poi_grid_dataset({{"A", 4}, {"B", 4}, {"C", 4}});
    const auto he = fairness::build_popularity_histogram(e);
    REQUIRE(he.points.size() == 1);
    CHECK(he.points[0] == std::pair<std::uint64_t, std::uint64_t>{4, 3});
  }

  SUBCASE("histogram total equals the POI count on a synthetic set") {
    SyntheticConfig cfg;
    cfg.n_users = 80;
    cfg.n_pois = 150;
    cfg.rng_seed = 13;
    const Dataset s = corpus::generate_synthetic(cfg);
    const auto hs = fairness::build_popularity_histogram(s);
    CHECK(hs.total_pois() == s.pois.size());
  }
}

TEST_CASE("fit_power_law recovers noiseless parameters exactly at lambda = 0") {
  std::vector<std::pair<double, double>> xy;
  for (int x = 1; x <= 50; ++x)
    xy.emplace_back(x, 100.0 * std::pow(static_cast<double>(x), -1.5));

  const auto m = fairness::fit_power_law_points(xy, 0.0);
  const auto [w0_oracle, w1_oracle] = ols_loglog(xy);
  CHECK(std::abs(w0_oracle - 100.0) < 1e-9);
  CHECK(std::abs(w1_oracle - (-1.5)) < 1e-9);
  CHECK(std::abs(m.p0 - 100.0) < 1e-9);
  CHECK(std::abs(m.p1 - (-1.5)) < 1e-9);
  CHECK(std::abs(m.score_ceiling - 100.0) < 1e-9);

  SUBCASE("ridge shrinks the slope toward zero") {
    const auto ridge = fairness::fit_power_law_points(xy, 10.0);
    CHECK(std::abs(ridge.p1) < std::abs(m.p1));
    CHECK(ridge.p1 < 0.0);
  }
}

TEST_CASE("fit_power_law on flat data gives zero slope") {
  PopularityHistogram h;
  h.points = {{1, 7}, {5, 7}, {20, 7}};
  const auto m = fairness::fit_power_law(h, 0.0);
  CHECK(m.p1 == doctest::Approx(0.0));
  CHECK(m.provider_score(1) == doctest::Approx(1.0));
  CHECK(m.provider_score(1000) == doctest::Approx(1.0));
}

TEST_CASE("fit_power_law rejects a single-bin histogram") {
  PopularityHistogram h;
  h.points = {{4, 10}};
  CHECK_THROWS_AS(fairness::fit_power_law(h), DataError);
}

TEST_CASE("fit_linear matches the closed form and clamps at zero") {
  std::vector<std::pair<double, double>> xy;
  for (int x = 1; x <= 9; ++x) xy.emplace_back(x, 10.0 - x);
  const auto m = fairness::fit_linear_points(xy);
  CHECK(std::abs(m.p0 - 10.0) < 1e-12);
  CHECK(std::abs(m.p1 - (-1.0)) < 1e-12);

  // Beyond the root of a + b x the clamped prediction is 0.
  CHECK(m.provider_score(20) == doctest::Approx(0.0));
  // At x_min = 1 the score is the ceiling itself.
  CHECK(m.provider_score(1) == doctest::Approx(1.0));
}

TEST_CASE("fit_logistic separates a wide-margin long tail") {
  // 120 POIs: the ceil(24) short-head POIs all live in the count-80/100
  // bins, the counts <= 2 are deep long tail.
  PopularityHistogram h;
  h.points = {{1, 60}, {2, 36}, {80, 14}, {100, 10}};
  const auto m = fairness::fit_logistic(h);
  CHECK(m.provider_score(1) > 0.9);
  CHECK(m.provider_score(100) < 0.1);
  CHECK(m.p0 <= 0.0);  // decreasing in ln x

  SUBCASE("single-class degenerate input errors") {
    PopularityHistogram single;
    single.points = {{1, 1}};
    CHECK_THROWS_AS(fairness::fit_logistic(single), DataError);
  }
}

TEST_CASE("provider_score conventions") {
  PopularityHistogram h;
  h.points = {{2, 100}, {4, 35}, {8, 13}, {16, 4}};
  const auto m = fairness::fit_power_law(h, 0.0);

  SUBCASE("x_min scores exactly 1") { CHECK(m.provider_score(2) == doctest::Approx(1.0)); }
  SUBCASE("zero count is scored as count 1, never above 1") {
    CHECK(m.provider_score(0) == doctest::Approx(m.provider_score(1)));
    CHECK(m.provider_score(0) <= 1.0);
  }
  SUBCASE("direct power-law evaluation") {
    ExposureModel pl;
    pl.family = ExposureFamily::PowerLaw;
    pl.p0 = 100.0;
    pl.p1 = -1.5;
    pl.x_min = 1;
    pl.score_ceiling = 100.0;
    CHECK(pl.provider_score(4) == doctest::Approx(0.125).epsilon(1e-12));
  }
}

TEST_CASE("provider_score is non-increasing for every family on random histograms") {
  SplitMix64 rng(2024);
  for (int trial = 0; trial < 60; ++trial) {
    const auto h = random_histogram(rng);
    std::vector<ExposureModel> models;
    models.push_back(fairness::fit_power_law(h, trial % 2 ? 10.0 : 0.0));
    models.push_back(fairness::fit_linear(h));
    try {
      models.push_back(fairness::fit_logistic(h));
    } catch (const DataError&) {
      // single-class label sets are legitimately rejected
    }
    for (const auto& m : models) {
      double prev = 2.0;
      for (std::uint64_t x = 0; x <= 250; ++x) {
        const double s = m.provider_score(x);
        CHECK(s >= 0.0);
        CHECK(s <= 1.0);
        if (x >= 1) {
          CHECK(s <= prev + 1e-12);
          prev = s;
        }
      }
    }
  }
}

TEST_CASE("exposure model JSON round-trips exactly") {
  PopularityHistogram h;
  h.points = {{1, 321}, {3, 77}, {9, 18}, {40, 2}};
  for (const auto& fit : {fairness::fit_power_law(h, 10.0), fairness::fit_linear(h),
                          fairness::fit_logistic(h)}) {
    const auto back = ExposureModel::from_json(fit.to_json());
    CHECK(back.family == fit.family);
    CHECK(back.p0 == fit.p0);
    CHECK(back.p1 == fit.p1);
    CHECK(back.score_ceiling == fit.score_ceiling);
    CHECK(back.x_min == fit.x_min);
  }
}

namespace {

// Five users; u1 is made active by volume. u5 visits v0 only; candidates
// c01..c10 sit 1..10 km north of v0 (c03 at 2.5 km), giving u5 a nearest-
// rank threshold of 2 km. c01 carries the maximum train popularity.
struct ConsumerFixture {
  Dataset d;
  GroupAssignment groups;
  fairness::ConsumerContext ctx;

  ConsumerFixture() {
    auto add_poi = [&](const std::string& id, double km_north) {
      d.pois[id] = Poi{id, km_north / kKmPerDegLat, 0.0, {}};
    };
    add_poi("v0", 0.0);
    const std::vector<double> dists = {1, 2, 2.5, 4, 5, 6, 7, 8, 9, 10};
    for (std::size_t i = 0; i < dists.size(); ++i) {
      char buf[8];
      std::snprintf(buf, sizeof(buf), "c%02zu", i + 1);
      add_poi(buf, dists[i]);
    }
    std::int64_t t = 0;
    auto checkin = [&](const std::string& u, const std::string& p) {
      d.users.insert(u);
      d.checkins.push_back({u, p, ++t});
    };
    for (int i = 0; i < 20; ++i) checkin("u1", "c01");  // most popular + active user
    for (int i = 0; i < 5; ++i) checkin("u2", "c02");
    for (int i = 0; i < 4; ++i) checkin("u3", "c03");
    for (int i = 0; i < 3; ++i) checkin("u4", "c04");
    checkin("u5", "v0");
    groups = corpus::assign_groups(d);
    ctx = fairness::build_consumer_context(d, groups);
  }
};

}  // namespace

TEST_CASE("consumer context thresholds and scores") {
  ConsumerFixture f;
  REQUIRE(f.groups.is_active("u1"));
  REQUIRE(!f.groups.is_active("u5"));

  SUBCASE("threshold is the nearest-rank 20th percentile") {
    const auto& entry = f.ctx.users.at("u5");
    REQUIRE(entry.has_threshold);
    CHECK(entry.threshold_km == doctest::Approx(2.0).epsilon(1e-6));
  }

  SUBCASE("active users always score 0") {
    for (const auto& [pid, poi] : f.d.pois)
      CHECK(fairness::consumer_score(f.ctx, "u1", pid) == 0.0);
  }

  SUBCASE("nearby max-popularity POI scores 1") {
    // c01 at 1 km <= 2 km threshold, train count 20 = max; v0 count 1 = min.
    CHECK(fairness::consumer_score(f.ctx, "u5", "c01") == doctest::Approx(1.0));
  }

  SUBCASE("POI just outside the threshold scores 0") {
    CHECK(fairness::consumer_score(f.ctx, "u5", "c03") == 0.0);  // 2.5 km > 2 km
  }

  SUBCASE("nearby but unpopular POI scores its normalized popularity") {
    // c02: count 5; counts span 0 (c05..c10) to 20 (c01).
    const double expected = (5.0 - 0.0) / (20.0 - 0.0);
    CHECK(fairness::consumer_score(f.ctx, "u5", "c02") == doctest::Approx(expected));
  }
}

TEST_CASE("co-located candidates are always nearby") {
  Dataset d;
  d.pois["v0"] = Poi{"v0", 10.0, 20.0, {}};
  d.pois["twin"] = Poi{"twin", 10.0, 20.0, {}};
  d.pois["far"] = Poi{"far", 11.0, 20.0, {}};
  std::int64_t t = 0;
  auto checkin = [&](const std::string& u, const std::string& p) {
    d.users.insert(u);
    d.checkins.push_back({u, p, ++t});
  };
  for (int i = 0; i < 10; ++i) checkin("u1", "far");
  checkin("u3", "twin");
  checkin("u3", "twin");
  checkin("u2", "v0");
  const auto groups = corpus::assign_groups(d);
  REQUIRE(!groups.is_active("u2"));
  const auto ctx = fairness::build_consumer_context(d, groups);
  // u2's threshold is the 1st of {0, ~111 km}; distance 0 is always inside,
  // so the co-located twin earns its (positive) popularity score.
  CHECK(fairness::consumer_score(ctx, "u2", "twin") ==
        doctest::Approx((2.0 - 1.0) / (10.0 - 1.0)));
}

TEST_CASE("rescore follows the normalized fairness formula") {
  rec::ScoredCandidates base;
  base.user_id = "u";
  base.entries = {{"a", 0.5}, {"b", 0.9}, {"c", 0.1}};

  const auto provider = [](const PoiId& p) -> double { return p == "a" ? 1.0 : 0.0; };
  const auto consumer = [](const UserId&, const PoiId&) -> double { return 0.0; };

  SUBCASE("alpha = beta = 0 is the exact identity") {
    const auto out = fairness::rescore(base, provider, consumer, {0.0, 0.0});
    REQUIRE(out.entries.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) {
      CHECK(out.entries[i].first == base.entries[i].first);
      CHECK(out.entries[i].second == base.entries[i].second);  // bit-exact
    }
  }

  SUBCASE("worked example: (0.5 + 0.5*1)/1.5") {
    const auto out = fairness::rescore(base, provider, consumer, {0.5, 0.0});
    CHECK(out.entries[0].second == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
  }

  SUBCASE("upper bound attained at all-ones") {
    rec::ScoredCandidates ones;
    ones.user_id = "u";
    ones.entries = {{"a", 1.0}};
    const auto out = fairness::rescore(
        ones, [](const PoiId&) { return 1.0; },
        [](const UserId&, const PoiId&) { return 1.0; }, {1.0, 1.0});
    CHECK(out.entries[0].second == doctest::Approx(1.0).epsilon(1e-15));
  }

  SUBCASE("weights outside [0,1] are rejected") {
    CHECK_THROWS_AS(fairness::rescore(base, provider, consumer, {1.5, 0.0}), ConfigError);
    CHECK_THROWS_AS(fairness::rescore(base, provider, consumer, {0.0, -0.1}), ConfigError);
  }
}

TEST_CASE("rescore properties over random inputs") {
  SplitMix64 rng(99);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 2 + rng.next_below(20);
    rec::ScoredCandidates base;
    base.user_id = "u";
    std::vector<double> fp(n), fc(n);
    for (std::size_t i = 0; i < n; ++i) {
      base.entries.emplace_back("p" + std::to_string(100 + i), rng.next_double());
      fp[i] = rng.next_double();
      fc[i] = rng.next_double();
    }
    auto provider = [&](const PoiId& p) { return fp[std::stoul(p.substr(1)) - 100]; };
    auto consumer = [&](const UserId&, const PoiId& p) {
      return fc[std::stoul(p.substr(1)) - 100];
    };
    const double alpha = rng.next_double();
    const double beta = rng.next_double();
    const auto out = fairness::rescore(base, provider, consumer, {alpha, beta});

    for (const auto& [p, s] : out.entries) {
      CHECK(s >= 0.0);
      CHECK(s <= 1.0);
    }

    // beta = 0 preserves relative order between candidates with equal F_p.
    const auto order_only = fairness::rescore(base, provider, consumer, {alpha, 0.0});
    for (std::size_t i = 0; i + 1 < n; ++i) {
      if (fp[i] == fp[i + 1]) {
        const bool base_less = base.entries[i].second < base.entries[i + 1].second;
        const bool out_less = order_only.entries[i].second < order_only.entries[i + 1].second;
        CHECK(base_less == out_less);
      }
    }
  }
}

TEST_CASE("raising alpha widens the gap in favor of the less popular candidate") {
  // Equal base score and consumer score; provider scores differ.
  rec::ScoredCandidates base;
  base.user_id = "u";
  base.entries = {{"popular", 0.6}, {"rare", 0.6}};
  auto provider = [](const PoiId& p) { return p == "rare" ? 0.9 : 0.2; };
  auto consumer = [](const UserId&, const PoiId&) { return 0.0; };

  double prev_gap = 0.0;
  for (double alpha : {0.0, 0.25, 0.5, 0.75, 1.0}) {
    const auto out = fairness::rescore(base, provider, consumer, {alpha, 0.0});
    const double gap = out.entries[1].second - out.entries[0].second;  // rare - popular
    CHECK(gap >= prev_gap - 1e-15);
    prev_gap = gap;
  }
  CHECK(prev_gap > 0.0);
}
