// fairpoi: fairness-aware POI recommendation experiments.
//
// Subcommands: ingest, synth, split, train, fit-exposure, recommend,
// evaluate, sweep, stats, pareto. Exit codes: 0 success, 1 usage error,
// 2 data error, 3 internal error.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "fairpoi/corpus.hpp"
#include "fairpoi/error.hpp"
#include "fairpoi/fairness.hpp"
#include "fairpoi/metrics.hpp"
#include "fairpoi/recommenders.hpp"
#include "fairpoi/runner.hpp"
#include "fairpoi/stats.hpp"

namespace fs = std::filesystem;
using namespace fairpoi;

namespace {

struct GlobalOpts {
  std::string config;
  std::uint64_t seed = 1;
  bool seed_set = false;
  std::string out = "out";
  bool out_set = false;
  std::size_t jobs = 1;
  bool jobs_set = false;
  std::string delimiter = "tab";
  bool delimiter_set = false;

  corpus::Delimiter delim() const {
    if (delimiter == "tab") return corpus::Delimiter::Tab;
    if (delimiter == "comma") return corpus::Delimiter::Comma;
    throw ConfigError("--delimiter must be 'tab' or 'comma'");
  }
};

void add_globals(CLI::App* cmd, GlobalOpts& g) {
  cmd->add_option("--config", g.config, "experiment config file");
  cmd->add_option("--seed", g.seed, "RNG seed")->each([&](const std::string&) {
    g.seed_set = true;
  });
  cmd->add_option("--out", g.out, "output directory")->each([&](const std::string&) {
    g.out_set = true;
  });
  cmd->add_option("--jobs", g.jobs, "parallel worker count")
      ->each([&](const std::string&) { g.jobs_set = true; });
  cmd->add_option("--delimiter", g.delimiter, "dataset file delimiter: tab or comma")
      ->check(CLI::IsMember({"tab", "comma"}))
      ->each([&](const std::string&) { g.delimiter_set = true; });
}

// defaults < config file < FAIRPOI_* env < explicit flags.
runner::ExperimentConfig resolve_config(const GlobalOpts& g) {
  runner::ExperimentConfig cfg;
  if (!g.config.empty()) cfg = runner::load_config(g.config);
  runner::apply_env_overrides(cfg);
  if (g.seed_set) cfg.rng_seed = g.seed;
  if (g.out_set) cfg.out_dir = g.out;
  if (g.jobs_set) cfg.jobs = g.jobs;
  if (g.delimiter_set) cfg.delimiter = g.delim();
  return cfg;
}

Dataset load_from_flags(const std::string& checkins, const std::string& pois,
                        const std::string& social, corpus::Delimiter delim) {
  std::optional<fs::path> social_path;
  if (!social.empty()) social_path = social;
  return corpus::load_dataset(checkins, pois, social_path, delim);
}

void write_text(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path().empty() ? "." : path.parent_path());
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
}

void print_stats(const Dataset& d, const fs::path& out_dir) {
  const auto groups = corpus::assign_groups(d);
  const auto stats = corpus::dataset_stats(d, groups);
  std::cout << corpus::stats_to_text(stats);
  fs::create_directories(out_dir);
  write_text(out_dir / "stats.txt", corpus::stats_to_text(stats));
  write_text(out_dir / "stats.json", corpus::stats_to_json(stats) + "\n");
}

std::vector<std::vector<double>> read_sample_columns(const fs::path& path,
                                                     corpus::Delimiter delim) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  const char dc = corpus::delimiter_char(delim);
  std::vector<std::vector<double>> cols;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::string f;
    std::istringstream ss(line);
    while (std::getline(ss, f, dc)) fields.push_back(f);
    if (cols.size() < fields.size()) cols.resize(fields.size());
    bool any = false;
    for (std::size_t i = 0; i < fields.size(); ++i) {
      if (fields[i].empty()) continue;
      try {
        std::size_t pos = 0;
        const double v = std::stod(fields[i], &pos);
        if (pos != fields[i].size()) throw std::invalid_argument(fields[i]);
        cols[i].push_back(v);
        any = true;
      } catch (...) {
        if (!first)
          throw DataError(path.string() + ": non-numeric value '" + fields[i] + "'");
      }
    }
    (void)any;
    first = false;
  }
  while (!cols.empty() && cols.back().empty()) cols.pop_back();
  if (cols.size() < 1) throw DataError(path.string() + ": no numeric columns");
  return cols;
}

int dispatch(int argc, char** argv) {
  CLI::App app{"Multi-sided fairness post-filtering for POI recommendation"};
  app.require_subcommand(1);

  GlobalOpts g;

  // ingest
  auto* ingest = app.add_subcommand("ingest", "load, filter and summarize a dataset");
  add_globals(ingest, g);
  std::string in_checkins, in_pois, in_social;
  std::size_t min_upp = 10, min_ppu = 10;
  bool no_filter = false;
  ingest->add_option("--checkins", in_checkins, "check-in file")->required();
  ingest->add_option("--pois", in_pois, "POI file")->required();
  ingest->add_option("--social", in_social, "social edge file");
  ingest->add_option("--min-users-per-poi", min_upp);
  ingest->add_option("--min-pois-per-user", min_ppu);
  ingest->add_flag("--no-filter", no_filter, "skip sparsity filtering");

  // synth
  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
  add_globals(synth, g);
  SyntheticConfig sc;
  synth->add_option("--users", sc.n_users);
  synth->add_option("--pois", sc.n_pois);
  synth->add_option("--exponent", sc.power_law_exponent);
  synth->add_option("--clusters", sc.n_geo_clusters);
  synth->add_option("--mean-checkins", sc.mean_checkins_per_user);
  synth->add_option("--social-p", sc.social_edge_probability);

  // split
  auto* split_cmd = app.add_subcommand("split", "chronological 70/20/10 split");
  add_globals(split_cmd, g);
  split_cmd->add_option("--checkins", in_checkins)->required();
  split_cmd->add_option("--pois", in_pois)->required();
  split_cmd->add_option("--social", in_social);

  // train
  auto* train_cmd = app.add_subcommand("train", "train a base model on a train split");
  add_globals(train_cmd, g);
  std::string kind_name = "popularity";
  rec::TrainParams train_params;
  train_cmd->add_option("--kind", kind_name, "popularity | usg | geosoca | lore");
  train_cmd->add_option("--checkins", in_checkins, "train-split check-ins")->required();
  train_cmd->add_option("--pois", in_pois)->required();
  train_cmd->add_option("--social", in_social);
  train_cmd->add_option("--usg-social-weight", train_params.usg_social_weight);
  train_cmd->add_option("--usg-geo-weight", train_params.usg_geo_weight);
  train_cmd->add_flag("--allow-missing-categories", train_params.allow_missing_categories);

  // fit-exposure
  auto* fit_cmd = app.add_subcommand("fit-exposure", "fit a provider exposure model");
  add_globals(fit_cmd, g);
  std::string family_name = "powerlaw";
  double ridge_lambda = 10.0;
  fit_cmd->add_option("--family", family_name, "powerlaw | linear | logistic");
  fit_cmd->add_option("--checkins", in_checkins, "train-split check-ins")->required();
  fit_cmd->add_option("--pois", in_pois)->required();
  fit_cmd->add_option("--ridge-lambda", ridge_lambda);

  // recommend
  auto* rec_cmd = app.add_subcommand("recommend", "emit top-k lists for every user");
  add_globals(rec_cmd, g);
  double alpha = 0.0, beta = 0.0;
  std::size_t k = 10;
  rec_cmd->add_option("--kind", kind_name);
  rec_cmd->add_option("--checkins", in_checkins, "train-split check-ins")->required();
  rec_cmd->add_option("--pois", in_pois)->required();
  rec_cmd->add_option("--social", in_social);
  rec_cmd->add_option("--alpha", alpha, "provider fairness weight");
  rec_cmd->add_option("--beta", beta, "consumer fairness weight");
  rec_cmd->add_option("--family", family_name);
  rec_cmd->add_option("--k", k);
  rec_cmd->add_option("--ridge-lambda", ridge_lambda);
  rec_cmd->add_flag("--allow-missing-categories", train_params.allow_missing_categories);

  // evaluate
  auto* eval_cmd = app.add_subcommand("evaluate", "score a model and report metrics");
  add_globals(eval_cmd, g);
  std::string test_checkins;
  bool hit_rate = false;
  eval_cmd->add_option("--kind", kind_name);
  eval_cmd->add_option("--checkins", in_checkins, "train-split check-ins")->required();
  eval_cmd->add_option("--test-checkins", test_checkins, "test-split check-ins")->required();
  eval_cmd->add_option("--pois", in_pois)->required();
  eval_cmd->add_option("--social", in_social);
  eval_cmd->add_option("--alpha", alpha);
  eval_cmd->add_option("--beta", beta);
  eval_cmd->add_option("--family", family_name);
  eval_cmd->add_option("--k", k);
  eval_cmd->add_option("--ridge-lambda", ridge_lambda);
  eval_cmd->add_flag("--hit-rate", hit_rate,
                     "report hit-rate@k (any hit counts as 1) instead of precision");
  eval_cmd->add_flag("--allow-missing-categories", train_params.allow_missing_categories);

  // sweep
  auto* sweep_cmd = app.add_subcommand("sweep", "run the full experiment grid");
  add_globals(sweep_cmd, g);
  std::string models_flag, families_flag, alpha_flag, beta_flag, k_flag, pairs_flag;
  bool tune = false;
  std::string compare_flag, compare_metric = "precision";
  double compare_alpha = 0.25, compare_beta = 0.0, compare_alpha_b = 0.0,
         compare_beta_b = 0.0;
  std::size_t compare_k = 10;
  sweep_cmd->add_option("--models", models_flag, "comma-separated model kinds");
  sweep_cmd->add_option("--families", families_flag, "comma-separated exposure families");
  sweep_cmd->add_option("--alpha-grid", alpha_flag);
  sweep_cmd->add_option("--beta-grid", beta_flag);
  sweep_cmd->add_option("--k-list", k_flag);
  sweep_cmd->add_option("--tradeoff-pairs", pairs_flag, "alpha:beta,alpha:beta,...");
  sweep_cmd->add_flag("--tune", tune, "pick (alpha, beta) on the validation split");
  sweep_cmd->add_option("--compare", compare_flag,
                        "also write comparisons.csv: kruskal | mannwhitney | wilcoxon");
  sweep_cmd->add_option("--compare-metric", compare_metric, "precision | exposure");
  sweep_cmd->add_option("--compare-alpha", compare_alpha);
  sweep_cmd->add_option("--compare-beta", compare_beta);
  sweep_cmd->add_option("--compare-alpha-b", compare_alpha_b,
                        "second weight pair for wilcoxon");
  sweep_cmd->add_option("--compare-beta-b", compare_beta_b);
  sweep_cmd->add_option("--compare-k", compare_k);

  // stats
  auto* stats_cmd = app.add_subcommand("stats", "nonparametric test over CSV sample columns");
  add_globals(stats_cmd, g);
  std::string test_name = "kruskal", input_file;
  stats_cmd->add_option("--test", test_name, "kruskal | mannwhitney | wilcoxon");
  stats_cmd->add_option("--input", input_file, "CSV with one sample per column")->required();

  // pareto
  auto* pareto_cmd = app.add_subcommand("pareto", "mark the Pareto front in a points.csv");
  add_globals(pareto_cmd, g);
  pareto_cmd->add_option("--input", input_file, "points.csv from sweep")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  if (*ingest) {
    Dataset d = load_from_flags(in_checkins, in_pois, in_social, g.delim());
    if (!no_filter) d = corpus::filter_sparse(d, min_upp, min_ppu);
    corpus::write_dataset(d, g.out);
    print_stats(d, g.out);
  } else if (*synth) {
    sc.rng_seed = g.seed;
    const Dataset d = corpus::generate_synthetic(sc);
    corpus::write_dataset(d, g.out);
    print_stats(d, g.out);
  } else if (*split_cmd) {
    const Dataset d = load_from_flags(in_checkins, in_pois, in_social, g.delim());
    const SplitDataset s = corpus::chronological_split(d);
    corpus::write_dataset(s.train, g.out, "train_");
    corpus::write_dataset(s.validation, g.out, "validation_");
    corpus::write_dataset(s.test, g.out, "test_");
    std::cout << "train=" << s.train.checkins.size()
              << " validation=" << s.validation.checkins.size()
              << " test=" << s.test.checkins.size() << "\n";
  } else if (*train_cmd) {
    const Dataset d = load_from_flags(in_checkins, in_pois, in_social, g.delim());
    const auto model =
        rec::BaseModel::train(rec::kind_from_name(kind_name), d, d.social, train_params);
    const fs::path out = fs::path(g.out) / ("model_" + kind_name + ".json");
    write_text(out, model.to_json() + "\n");
    std::cout << "wrote " << out.string() << "\n";
  } else if (*fit_cmd) {
    const Dataset d = load_from_flags(in_checkins, in_pois, "", g.delim());
    const auto hist = fairness::build_popularity_histogram(d);
    fairness::ExposureModel model;
    switch (fairness::family_from_name(family_name)) {
      case fairness::ExposureFamily::PowerLaw:
        model = fairness::fit_power_law(hist, ridge_lambda);
        break;
      case fairness::ExposureFamily::Linear:
        model = fairness::fit_linear(hist);
        break;
      case fairness::ExposureFamily::Logistic:
        model = fairness::fit_logistic(hist);
        break;
    }
    const fs::path out = fs::path(g.out) / ("exposure_" + family_name + ".json");
    write_text(out, model.to_json() + "\n");
    std::cout << model.to_json() << "\n";
  } else if (*rec_cmd || *eval_cmd) {
    const Dataset d = load_from_flags(in_checkins, in_pois, in_social, g.delim());
    const auto kind = rec::kind_from_name(kind_name);
    const auto family = fairness::family_from_name(family_name);
    const auto model = rec::BaseModel::train(kind, d, d.social, train_params);
    const auto groups = corpus::assign_groups(d);
    const auto hist = fairness::build_popularity_histogram(d);
    fairness::ExposureModel exposure;
    switch (family) {
      case fairness::ExposureFamily::PowerLaw:
        exposure = fairness::fit_power_law(hist, ridge_lambda);
        break;
      case fairness::ExposureFamily::Linear:
        exposure = fairness::fit_linear(hist);
        break;
      case fairness::ExposureFamily::Logistic:
        exposure = fairness::fit_logistic(hist);
        break;
    }
    std::map<PoiId, std::uint64_t> counts;
    for (const auto& [id, poi] : d.pois) counts[id] = 0;
    for (const auto& c : d.checkins) ++counts[c.poi_id];
    fairness::ConsumerContext ctx;
    if (beta > 0.0) ctx = fairness::build_consumer_context(d, groups);
    fairness::FairnessWeights w{alpha, beta, family};
    fairness::ProviderLookup provider = [&](const PoiId& p) {
      return exposure.provider_score(counts.at(p));
    };
    fairness::ConsumerLookup consumer = [&](const UserId& u, const PoiId& p) {
      return fairness::consumer_score(ctx, u, p);
    };

    std::vector<rec::RecommendationList> lists;
    for (const auto& u : model.matrix().users) {
      lists.push_back(
          rec::top_k(fairness::rescore(model.score_candidates(u), provider, consumer, w), k));
    }

    if (*rec_cmd) {
      fs::create_directories(g.out);
      std::ofstream out(fs::path(g.out) / "recommendations.csv");
      out << "user_id,rank,poi_id,score\n";
      out.precision(17);
      for (const auto& l : lists) {
        for (std::size_t i = 0; i < l.ranked.size(); ++i)
          out << l.user_id << "," << i + 1 << "," << l.ranked[i].first << ","
              << l.ranked[i].second << "\n";
      }
      std::cout << "wrote " << (fs::path(g.out) / "recommendations.csv").string() << "\n";
    } else {
      const Dataset test = load_from_flags(test_checkins, in_pois, "", g.delim());
      std::map<UserId, std::set<PoiId>> test_visits;
      for (const auto& c : test.checkins) test_visits[c.user_id].insert(c.poi_id);
      double sum = 0;
      static const std::set<PoiId> none;
      for (const auto& l : lists) {
        const auto it = test_visits.find(l.user_id);
        const auto& visits = it == test_visits.end() ? none : it->second;
        sum += hit_rate ? metrics::hit_rate_at_k(l, visits, k)
                        : metrics::precision_at_k(l, visits, k);
      }
      const auto exposure_t = metrics::exposure_table(lists, d.pois);
      nlohmann::json j;
      j["model"] = kind_name;
      j["alpha"] = alpha;
      j["beta"] = beta;
      j["exposure_family"] = family_name;
      j["k"] = k;
      j[hit_rate ? "hit_rate" : "precision"] = sum / static_cast<double>(lists.size());
      j["exp_longtail"] = metrics::group_mean_exposure(exposure_t, groups, ItemGroup::LongTail);
      j["exp_shorthead"] = metrics::group_mean_exposure(exposure_t, groups, ItemGroup::ShortHead);
      const auto centroids = metrics::build_centroids(d);
      j["mean_median_dist_km"] = metrics::mean_median_distance(lists, centroids, d.pois);
      std::cout << j.dump(2) << "\n";
    }
  } else if (*sweep_cmd) {
    runner::ExperimentConfig cfg = resolve_config(g);
    if (!models_flag.empty())
      runner::apply_config_line(cfg, "experiment", "models", models_flag);
    if (!families_flag.empty())
      runner::apply_config_line(cfg, "experiment", "families", families_flag);
    if (!alpha_flag.empty())
      runner::apply_config_line(cfg, "experiment", "alpha_grid", alpha_flag);
    if (!beta_flag.empty())
      runner::apply_config_line(cfg, "experiment", "beta_grid", beta_flag);
    if (!k_flag.empty()) runner::apply_config_line(cfg, "experiment", "k_list", k_flag);
    if (!pairs_flag.empty())
      runner::apply_config_line(cfg, "experiment", "tradeoff_pairs", pairs_flag);
    if (tune) cfg.tune = true;
    const auto result = runner::run_pipeline(cfg);
    const auto files = runner::emit_tables(result, cfg.out_dir);
    for (const auto& f : files) std::cout << "wrote " << f.string() << "\n";
    if (result.tuned_weights)
      std::cout << "tuned alpha=" << result.tuned_weights->first
                << " beta=" << result.tuned_weights->second << "\n";
    if (!compare_flag.empty()) {
      runner::CompareSelector sel;
      sel.metric = compare_metric;
      sel.alpha = compare_alpha;
      sel.beta = compare_beta;
      sel.alpha_b = compare_alpha_b;
      sel.beta_b = compare_beta_b;
      sel.k = compare_k;
      const auto rows = runner::compare_models(
          result, runner::stat_test_from_name(compare_flag), sel);
      const fs::path p = fs::path(cfg.out_dir) / "comparisons.csv";
      write_text(p, runner::comparisons_to_csv(rows));
      std::cout << "wrote " << p.string() << "\n";
    }
  } else if (*stats_cmd) {
    const auto cols = read_sample_columns(input_file, g.delim());
    const auto test = runner::stat_test_from_name(test_name);
    stats::TestResult result;
    if (test == runner::StatTest::Kruskal) {
      result = stats::kruskal_wallis(cols);
    } else if (test == runner::StatTest::MannWhitney) {
      if (cols.size() < 2) throw DataError("mannwhitney needs two columns");
      result = stats::mann_whitney_u(cols[0], cols[1]);
    } else {
      if (cols.size() == 1) {
        result = stats::wilcoxon_signed_rank(cols[0]);
      } else {
        if (cols[0].size() != cols[1].size())
          throw DataError("wilcoxon needs paired columns of equal length");
        std::vector<double> diffs(cols[0].size());
        for (std::size_t i = 0; i < diffs.size(); ++i) diffs[i] = cols[0][i] - cols[1][i];
        result = stats::wilcoxon_signed_rank(diffs);
      }
    }
    std::cout << result.to_json() << "\n";
  } else if (*pareto_cmd) {
    std::ifstream in(input_file);
    if (!in) throw DataError("cannot open " + input_file);
    std::string line;
    std::vector<metrics::ParetoPoint> pts;
    bool header = true;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      if (header) {
        header = false;
        continue;
      }
      std::vector<std::string> f;
      std::string field;
      std::istringstream ss(line);
      while (std::getline(ss, field, ',')) f.push_back(field);
      if (f.size() < 4) throw DataError(input_file + ": expected label,user_gce,item_gce,precision");
      metrics::ParetoPoint p;
      p.label = f[0];
      p.user_gce = std::stod(f[1]);
      p.item_gce = std::stod(f[2]);
      p.precision = std::stod(f[3]);
      pts.push_back(p);
    }
    if (pts.empty()) throw DataError(input_file + ": no points");
    const auto front = metrics::pareto_front(pts);
    std::vector<bool> on(pts.size(), false);
    for (std::size_t i : front) on[i] = true;
    std::cout << "label,user_gce,item_gce,precision,on_front\n";
    for (std::size_t i = 0; i < pts.size(); ++i) {
      std::cout << pts[i].label << "," << pts[i].user_gce << "," << pts[i].item_gce << ","
                << pts[i].precision << "," << (on[i] ? 1 : 0) << "\n";
    }
  }

  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return dispatch(argc, argv);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const CapabilityError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 3;
  }
}
