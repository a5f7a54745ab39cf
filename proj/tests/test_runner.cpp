#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>

#include "doctest.h"

#include "fairpoi/corpus.hpp"
#include "fairpoi/error.hpp"
#include "fairpoi/fairness.hpp"
#include "fairpoi/metrics.hpp"
#include "fairpoi/recommenders.hpp"
#include "fairpoi/runner.hpp"

using namespace fairpoi;
namespace fs = std::filesystem;

namespace {

fs::path tmp_dir(const std::string& tag) {
  static int counter = 0;
  const fs::path p =
      fs::temp_directory_path() / ("fairpoi_runner_" + tag + "_" + std::to_string(counter++));
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

runner::ExperimentConfig small_config(const fs::path& out) {
  runner::ExperimentConfig cfg;
  cfg.synthetic.n_users = 100;
  cfg.synthetic.n_pois = 80;
  cfg.synthetic.mean_checkins_per_user = 30;
  cfg.synthetic.n_geo_clusters = 2;
  cfg.synthetic.social_edge_probability = 0.05;
  cfg.models = {rec::ModelKind::Popularity};
  cfg.families = {fairness::ExposureFamily::PowerLaw, fairness::ExposureFamily::Linear,
                  fairness::ExposureFamily::Logistic};
  cfg.alpha_grid = {0.0, 0.25, 0.5, 0.75, 1.0};
  cfg.beta_grid = {0.0};
  cfg.k_list = {10};
  cfg.out_dir = out;
  cfg.rng_seed = 33;
  return cfg;
}

}  // namespace

TEST_CASE("config files parse sections, lists and pairs") {
  const auto dir = tmp_dir("cfg");
  const fs::path file = dir / "exp.cfg";
  std::ofstream out(file);
  out << "# experiment configuration\n"
      << "[synthetic]\n"
      << "users = 50\n"
      << "pois = 70\n"
      << "exponent = -1.2\n"
      << "[experiment]\n"
      << "models = popularity,usg\n"
      << "families = linear\n"
      << "alpha_grid = 0,0.5\n"
      << "beta_grid = 0,1\n"
      << "tradeoff_pairs = 0.25:0.25, 1:0\n"
      << "k_list = 5,10\n"
      << "seed = 9\n"
      << "[output]\n"
      << "dir = /tmp/somewhere\n";
  out.close();

  const auto cfg = runner::load_config(file);
  CHECK(cfg.synthetic.n_users == 50);
  CHECK(cfg.synthetic.power_law_exponent == doctest::Approx(-1.2));
  CHECK(cfg.models.size() == 2);
  CHECK(cfg.families.size() == 1);
  CHECK(cfg.alpha_grid == std::vector<double>{0.0, 0.5});
  CHECK(cfg.beta_grid == std::vector<double>{0.0, 1.0});
  REQUIRE(cfg.tradeoff_pairs.size() == 2);
  CHECK(cfg.tradeoff_pairs[1].first == doctest::Approx(1.0));
  CHECK(cfg.k_list == std::vector<std::size_t>{5, 10});
  CHECK(cfg.rng_seed == 9);
  CHECK(cfg.out_dir == fs::path("/tmp/somewhere"));

  SUBCASE("unknown keys fail loudly with the line number") {
    std::ofstream bad(dir / "bad.cfg");
    bad << "[experiment]\nmodls = usg\n";
    bad.close();
    CHECK_THROWS_WITH_AS(runner::load_config(dir / "bad.cfg"),
                         doctest::Contains("bad.cfg:2"), ConfigError);
  }

  SUBCASE("validation catches out-of-range grids") {
    runner::ExperimentConfig c;
    c.alpha_grid = {0.0, 1.5};
    CHECK_THROWS_AS(c.validate(), ConfigError);
  }
}

TEST_CASE("environment overrides apply to the global knobs") {
  runner::ExperimentConfig cfg;
  setenv("FAIRPOI_SEED", "777", 1);
  setenv("FAIRPOI_JOBS", "3", 1);
  runner::apply_env_overrides(cfg);
  unsetenv("FAIRPOI_SEED");
  unsetenv("FAIRPOI_JOBS");
  CHECK(cfg.rng_seed == 777);
  CHECK(cfg.jobs == 3);
}

TEST_CASE("run_pipeline produces the full grid exactly once") {
  const auto out = tmp_dir("grid");
  const auto cfg = small_config(out);
  const auto result = runner::run_pipeline(cfg);

  // |models| * |families| * |alpha| * |beta| * |k| = 1*3*5*1*1
  CHECK(result.rows.size() == 15);
  std::set<std::tuple<std::string, std::string, double, double, std::size_t>> keys;
  for (const auto& r : result.rows)
    keys.insert({r.model, r.family, r.alpha, r.beta, r.k});
  CHECK(keys.size() == 15);

  SUBCASE("rows are sorted by the fixed key order") {
    for (std::size_t i = 1; i < result.rows.size(); ++i) {
      const auto& a = result.rows[i - 1];
      const auto& b = result.rows[i];
      CHECK(std::tie(a.model, a.family, a.alpha, a.beta, a.k) <
            std::tie(b.model, b.family, b.alpha, b.beta, b.k));
    }
  }

  SUBCASE("manifest marks completion") {
    const auto manifest = slurp(out / "MANIFEST.json");
    CHECK(manifest.find("\"complete\": true") != std::string::npos);
  }

  SUBCASE("emit_tables writes the four files with stable headers") {
    const auto files = runner::emit_tables(result, out);
    CHECK(files.size() == 5);
    const auto results_csv = slurp(out / "results.csv");
    CHECK(results_csv.rfind("model,alpha,beta,exposure_family,k,precision,"
                            "precision_active,precision_inactive,exp_longtail,"
                            "exp_shorthead,gce_users,gce_items,mean_median_dist_km",
                            0) == 0);
    const auto points_csv = slurp(out / "points.csv");
    CHECK(points_csv.rfind("label,user_gce,item_gce,precision,on_front", 0) == 0);
    CHECK(slurp(out / "table1.csv").rfind("model,exposure_family,alpha,k,", 0) == 0);
    CHECK(slurp(out / "table2.csv").rfind("model,alpha,beta,k,", 0) == 0);
  }
}

TEST_CASE("tradeoff pairs extend the grid without duplicates") {
  const auto out = tmp_dir("pairs");
  auto cfg = small_config(out);
  cfg.alpha_grid = {0.0};
  cfg.beta_grid = {0.0};
  cfg.families = {fairness::ExposureFamily::Linear};
  cfg.tradeoff_pairs = {{0.0, 0.0}, {0.5, 0.5}};  // first pair duplicates the grid
  const auto result = runner::run_pipeline(cfg);
  CHECK(result.rows.size() == 2);
}

TEST_CASE("sweep is deterministic byte for byte") {
  const auto out_a = tmp_dir("det_a");
  const auto out_b = tmp_dir("det_b");
  auto cfg_a = small_config(out_a);
  auto cfg_b = small_config(out_b);
  cfg_a.jobs = 1;
  cfg_b.jobs = 2;  // parallelism must not change the bytes

  const auto ra = runner::run_pipeline(cfg_a);
  const auto rb = runner::run_pipeline(cfg_b);
  runner::emit_tables(ra, out_a);
  runner::emit_tables(rb, out_b);

  for (const auto* name : {"results.csv", "table1.csv", "table2.csv", "points.csv"}) {
    CHECK(slurp(out_a / name) == slurp(out_b / name));
    CHECK(!slurp(out_a / name).empty());
  }
}

TEST_CASE("alpha = beta = 0 sweep rows equal a direct single evaluation") {
  const auto out = tmp_dir("reuse");
  auto cfg = small_config(out);
  cfg.alpha_grid = {0.0};
  cfg.families = {fairness::ExposureFamily::PowerLaw};
  const auto result = runner::run_pipeline(cfg);
  REQUIRE(result.rows.size() == 1);
  const auto& row = result.rows[0];

  // Rebuild the same pipeline by hand and evaluate the baseline directly.
  SyntheticConfig synth = cfg.synthetic;
  synth.rng_seed = cfg.rng_seed;
  const auto raw = corpus::generate_synthetic(synth);
  const auto filtered = corpus::filter_sparse(raw, cfg.min_users_per_poi, cfg.min_pois_per_user);
  const auto split = corpus::chronological_split(filtered);
  const auto groups = corpus::assign_groups(split.train);
  const auto model =
      rec::BaseModel::train(rec::ModelKind::Popularity, split.train, split.train.social);

  std::map<UserId, std::set<PoiId>> test_visits;
  for (const auto& c : split.test.checkins) test_visits[c.user_id].insert(c.poi_id);

  std::vector<rec::RecommendationList> lists;
  double prec_sum = 0;
  static const std::set<PoiId> none;
  for (const auto& u : model.matrix().users) {
    lists.push_back(rec::top_k(model.score_candidates(u), 10));
    const auto it = test_visits.find(u);
    prec_sum += metrics::precision_at_k(lists.back(), it == test_visits.end() ? none : it->second, 10);
  }
  const double precision = prec_sum / static_cast<double>(model.matrix().users.size());
  const auto exposure = metrics::exposure_table(lists, split.train.pois);
  const double lt = metrics::group_mean_exposure(exposure, groups, ItemGroup::LongTail);

  CHECK(row.precision == doctest::Approx(precision).epsilon(1e-12));
  CHECK(row.exp_longtail == doctest::Approx(lt).epsilon(1e-12));
}

TEST_CASE("pipeline failures are stage-tagged and leave an incomplete manifest") {
  const auto out = tmp_dir("fail");
  runner::ExperimentConfig cfg;
  cfg.checkins_path = "/nonexistent/checkins.tsv";
  cfg.pois_path = "/nonexistent/pois.tsv";
  cfg.out_dir = out;
  CHECK_THROWS_WITH_AS(runner::run_pipeline(cfg), doctest::Contains("[stage:ingest]"),
                       Error);
  const auto manifest = slurp(out / "MANIFEST.json");
  CHECK(manifest.find("\"complete\": false") != std::string::npos);
  CHECK(manifest.find("\"failed_stage\": \"ingest\"") != std::string::npos);
}

TEST_CASE("compare_models emits the expected grids") {
  const auto out = tmp_dir("cmp");
  auto cfg = small_config(out);
  cfg.alpha_grid = {0.0, 0.25};
  const auto result = runner::run_pipeline(cfg);

  SUBCASE("kruskal: one row per model") {
    runner::CompareSelector sel;
    sel.metric = "precision";
    sel.alpha = 0.25;
    sel.beta = 0.0;
    sel.k = 10;
    const auto rows = runner::compare_models(result, runner::StatTest::Kruskal, sel);
    REQUIRE(rows.size() == 1);
    CHECK(rows[0].model == "popularity");
    CHECK(rows[0].result.n.size() == 3);  // three families
  }

  SUBCASE("mannwhitney: one row per family pair") {
    runner::CompareSelector sel;
    sel.metric = "exposure";
    sel.alpha = 0.25;
    const auto rows = runner::compare_models(result, runner::StatTest::MannWhitney, sel);
    CHECK(rows.size() == 3);  // 3 choose 2
    std::set<std::pair<std::string, std::string>> pairs;
    for (const auto& r : rows) pairs.insert({r.left, r.right});
    CHECK(pairs.size() == 3);
  }

  SUBCASE("wilcoxon pairs configurations and matches a direct recomputation") {
    runner::CompareSelector sel;
    sel.metric = "precision";
    sel.alpha = 0.25;
    sel.beta = 0.0;
    sel.alpha_b = 0.0;
    sel.beta_b = 0.0;
    const auto rows = runner::compare_models(result, runner::StatTest::Wilcoxon, sel);
    REQUIRE(rows.size() == 3);  // one per family

    // Recompute the deltas for the linear family independently.
    const auto& after =
        result.samples.at({"popularity", "linear", 0.25, 0.0, 10}).user_precision;
    const auto& before =
        result.samples.at({"popularity", "linear", 0.0, 0.0, 10}).user_precision;
    REQUIRE(after.size() == before.size());
    std::vector<double> deltas(after.size());
    for (std::size_t i = 0; i < after.size(); ++i) deltas[i] = after[i] - before[i];
    bool any_nonzero = false;
    for (double d : deltas) any_nonzero |= d != 0.0;
    if (any_nonzero) {
      const auto direct = stats::wilcoxon_signed_rank(deltas);
      for (const auto& r : rows) {
        if (r.left.rfind("linear", 0) == 0) {
          CHECK(r.result.p_value == doctest::Approx(direct.p_value).epsilon(1e-12));
          CHECK(r.result.statistic == doctest::Approx(direct.statistic).epsilon(1e-12));
        }
      }
    }
  }

  SUBCASE("identical configurations compare as insignificant") {
    runner::CompareSelector sel;
    sel.metric = "precision";
    sel.alpha = 0.0;  // compare families at alpha 0: all identical baselines
    const auto rows = runner::compare_models(result, runner::StatTest::MannWhitney, sel);
    for (const auto& r : rows) {
      CHECK(r.result.p_value == doctest::Approx(1.0).epsilon(0.02));
      CHECK(!r.significant);
    }
  }

  SUBCASE("csv rendering") {
    runner::CompareSelector sel;
    const auto rows = runner::compare_models(result, runner::StatTest::Kruskal, sel);
    const auto csv = runner::comparisons_to_csv(rows);
    CHECK(csv.rfind("model,metric,left,right,statistic,p_value,significant", 0) == 0);
  }
}

TEST_CASE("beta only moves inactive users' metrics through the whole pipeline") {
  const auto out = tmp_dir("beta");
  auto cfg = small_config(out);
  cfg.alpha_grid = {0.25};
  cfg.beta_grid = {0.0, 1.0};
  cfg.families = {fairness::ExposureFamily::Linear};
  const auto result = runner::run_pipeline(cfg);
  REQUIRE(result.rows.size() == 2);

  // Rebuild the groups to know which sample slots belong to active users.
  SyntheticConfig synth = cfg.synthetic;
  synth.rng_seed = cfg.rng_seed;
  const auto filtered = corpus::filter_sparse(corpus::generate_synthetic(synth),
                                              cfg.min_users_per_poi, cfg.min_pois_per_user);
  const auto split = corpus::chronological_split(filtered);
  const auto groups = corpus::assign_groups(split.train);
  std::vector<UserId> users(split.train.users.begin(), split.train.users.end());

  const auto& p0 = result.samples.at({"popularity", "linear", 0.25, 0.0, 10}).user_precision;
  const auto& p1 = result.samples.at({"popularity", "linear", 0.25, 1.0, 10}).user_precision;
  REQUIRE(p0.size() == users.size());
  for (std::size_t i = 0; i < users.size(); ++i) {
    if (groups.is_active(users[i])) CHECK(p0[i] == p1[i]);
  }
}

TEST_CASE("tune mode selects weights by validation precision under an exposure floor") {
  const auto out = tmp_dir("tune");
  auto cfg = small_config(out);
  cfg.alpha_grid = {0.0, 1.0};
  cfg.beta_grid = {0.0};
  cfg.families = {fairness::ExposureFamily::Linear};
  cfg.tune = true;
  cfg.tune_exposure_floor = 0.0;
  const auto result = runner::run_pipeline(cfg);
  REQUIRE(result.tuned_weights.has_value());
  const auto [a, b] = *result.tuned_weights;
  CHECK((a == 0.0 || a == 1.0));
  CHECK(b == 0.0);

  SUBCASE("an unattainable exposure floor leaves no tuned weights") {
    auto strict = cfg;
    strict.out_dir = tmp_dir("tune_floor");
    strict.tune_exposure_floor = 1e9;
    const auto r2 = runner::run_pipeline(strict);
    CHECK(!r2.tuned_weights.has_value());
  }
}

TEST_CASE("model and exposure caches are reused on config-hash match") {
  const auto out = tmp_dir("cache");
  auto cfg = small_config(out);
  cfg.alpha_grid = {0.0};
  cfg.families = {fairness::ExposureFamily::PowerLaw};
  const auto r1 = runner::run_pipeline(cfg);
  CHECK(fs::exists(out / "cache" / "model_popularity.json"));
  CHECK(fs::exists(out / "cache" / "exposure_powerlaw.json"));

  // Second run hits the cache and must produce identical rows.
  const auto r2 = runner::run_pipeline(cfg);
  REQUIRE(r1.rows.size() == r2.rows.size());
  CHECK(r1.rows[0].precision == r2.rows[0].precision);
  CHECK(r1.rows[0].exp_longtail == r2.rows[0].exp_longtail);
  CHECK(r1.config_hash == r2.config_hash);
}
