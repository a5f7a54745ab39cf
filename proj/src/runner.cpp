#include "fairpoi/runner.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <thread>

#include "json.hpp"

#include "fairpoi/error.hpp"

namespace fairpoi::runner {

namespace fs = std::filesystem;

namespace {

std::string fmt_double(double v, const char* format = "%g") {
  char buf[64];
  std::snprintf(buf, sizeof(buf), format, v);
  return buf;
}

std::string fmt_metric(double v) { return fmt_double(v, "%.6f"); }

std::string fmt_gce(const metrics::GceResult& g) {
  return g.degenerate ? "NA" : fmt_metric(g.value);
}

std::vector<std::string> split_list(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream ss(s);
  while (std::getline(ss, item, sep)) {
    while (!item.empty() && std::isspace(static_cast<unsigned char>(item.front())))
      item.erase(item.begin());
    while (!item.empty() && std::isspace(static_cast<unsigned char>(item.back())))
      item.pop_back();
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

double parse_double_or(const std::string& v, const std::string& key) {
  try {
    std::size_t pos = 0;
    const double x = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (...) {
    throw ConfigError("config key '" + key + "': expected a number, got '" + v + "'");
  }
}

std::uint64_t parse_u64_or(const std::string& v, const std::string& key) {
  try {
    std::size_t pos = 0;
    const unsigned long long x = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (...) {
    throw ConfigError("config key '" + key + "': expected a non-negative integer, got '" + v + "'");
  }
}

}  // namespace

void ExperimentConfig::validate() const {
  auto in01 = [](double v) { return v >= 0.0 && v <= 1.0; };
  for (double a : alpha_grid)
    if (!in01(a)) throw ConfigError("alpha_grid values must lie in [0, 1]");
  for (double b : beta_grid)
    if (!in01(b)) throw ConfigError("beta_grid values must lie in [0, 1]");
  for (const auto& [a, b] : tradeoff_pairs)
    if (!in01(a) || !in01(b)) throw ConfigError("tradeoff pairs must lie in [0, 1]");
  if (alpha_grid.empty() || beta_grid.empty())
    throw ConfigError("alpha_grid and beta_grid must be non-empty");
  if (k_list.empty()) throw ConfigError("k_list must be non-empty");
  for (std::size_t k : k_list)
    if (k == 0) throw ConfigError("k values must be >= 1");
  if (models.empty()) throw ConfigError("at least one model is required");
  if (families.empty()) throw ConfigError("at least one exposure family is required");
  if (jobs == 0) throw ConfigError("jobs must be >= 1");
  const bool have_paths = checkins_path.has_value() || pois_path.has_value();
  if (have_paths && (!checkins_path || !pois_path))
    throw ConfigError("checkins and pois paths must be given together");
}

std::string ExperimentConfig::canonical() const {
  std::ostringstream o;
  o << "data.checkins=" << (checkins_path ? checkins_path->string() : "") << "\n";
  o << "data.pois=" << (pois_path ? pois_path->string() : "") << "\n";
  o << "data.social=" << (social_path ? social_path->string() : "") << "\n";
  o << "data.delimiter=" << (delimiter == corpus::Delimiter::Tab ? "tab" : "comma") << "\n";
  o << "data.min_users_per_poi=" << min_users_per_poi << "\n";
  o << "data.min_pois_per_user=" << min_pois_per_user << "\n";
  o << "synthetic.users=" << synthetic.n_users << "\n";
  o << "synthetic.pois=" << synthetic.n_pois << "\n";
  o << "synthetic.exponent=" << fmt_double(synthetic.power_law_exponent) << "\n";
  o << "synthetic.clusters=" << synthetic.n_geo_clusters << "\n";
  o << "synthetic.mean_checkins=" << fmt_double(synthetic.mean_checkins_per_user) << "\n";
  o << "synthetic.social_p=" << fmt_double(synthetic.social_edge_probability) << "\n";
  o << "experiment.models=";
  for (std::size_t i = 0; i < models.size(); ++i)
    o << (i ? "," : "") << rec::kind_name(models[i]);
  o << "\nexperiment.families=";
  for (std::size_t i = 0; i < families.size(); ++i)
    o << (i ? "," : "") << fairness::family_name(families[i]);
  o << "\nexperiment.alpha_grid=";
  for (std::size_t i = 0; i < alpha_grid.size(); ++i)
    o << (i ? "," : "") << fmt_double(alpha_grid[i]);
  o << "\nexperiment.beta_grid=";
  for (std::size_t i = 0; i < beta_grid.size(); ++i)
    o << (i ? "," : "") << fmt_double(beta_grid[i]);
  o << "\nexperiment.tradeoff_pairs=";
  for (std::size_t i = 0; i < tradeoff_pairs.size(); ++i)
    o << (i ? "," : "") << fmt_double(tradeoff_pairs[i].first) << ":"
      << fmt_double(tradeoff_pairs[i].second);
  o << "\nexperiment.k_list=";
  for (std::size_t i = 0; i < k_list.size(); ++i) o << (i ? "," : "") << k_list[i];
  o << "\nexperiment.ridge_lambda=" << fmt_double(ridge_lambda) << "\n";
  o << "experiment.usg_social_weight=" << fmt_double(train_params.usg_social_weight) << "\n";
  o << "experiment.usg_geo_weight=" << fmt_double(train_params.usg_geo_weight) << "\n";
  o << "experiment.allow_missing_categories="
    << (train_params.allow_missing_categories ? "true" : "false") << "\n";
  o << "experiment.seed=" << rng_seed << "\n";
  o << "experiment.tune=" << (tune ? "true" : "false") << "\n";
  o << "experiment.tune_exposure_floor=" << fmt_double(tune_exposure_floor) << "\n";
  return o.str();
}

std::string ExperimentConfig::hash() const {
  // FNV-1a 64.
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : canonical()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void apply_config_line(ExperimentConfig& cfg, const std::string& section,
                       const std::string& key, const std::string& value) {
  const std::string full = section.empty() ? key : section + "." + key;

  if (full == "data.checkins") cfg.checkins_path = value;
  else if (full == "data.pois") cfg.pois_path = value;
  else if (full == "data.social") cfg.social_path = value;
  else if (full == "data.delimiter") {
    if (value == "tab") cfg.delimiter = corpus::Delimiter::Tab;
    else if (value == "comma") cfg.delimiter = corpus::Delimiter::Comma;
    else throw ConfigError("data.delimiter must be 'tab' or 'comma'");
  } else if (full == "data.min_users_per_poi")
    cfg.min_users_per_poi = static_cast<std::size_t>(parse_u64_or(value, full));
  else if (full == "data.min_pois_per_user")
    cfg.min_pois_per_user = static_cast<std::size_t>(parse_u64_or(value, full));
  else if (full == "synthetic.users")
    cfg.synthetic.n_users = static_cast<std::size_t>(parse_u64_or(value, full));
  else if (full == "synthetic.pois")
    cfg.synthetic.n_pois = static_cast<std::size_t>(parse_u64_or(value, full));
  else if (full == "synthetic.exponent")
    cfg.synthetic.power_law_exponent = parse_double_or(value, full);
  else if (full == "synthetic.clusters")
    cfg.synthetic.n_geo_clusters = static_cast<std::size_t>(parse_u64_or(value, full));
  else if (full == "synthetic.mean_checkins")
    cfg.synthetic.mean_checkins_per_user = parse_double_or(value, full);
  else if (full == "synthetic.social_p")
    cfg.synthetic.social_edge_probability = parse_double_or(value, full);
  else if (full == "experiment.models") {
    cfg.models.clear();
    for (const auto& m : split_list(value, ','))
      cfg.models.push_back(rec::kind_from_name(m));
  } else if (full == "experiment.families") {
    cfg.families.clear();
    for (const auto& f : split_list(value, ','))
      cfg.families.push_back(fairness::family_from_name(f));
  } else if (full == "experiment.alpha_grid") {
    cfg.alpha_grid.clear();
    for (const auto& a : split_list(value, ','))
      cfg.alpha_grid.push_back(parse_double_or(a, full));
  } else if (full == "experiment.beta_grid") {
    cfg.beta_grid.clear();
    for (const auto& b : split_list(value, ','))
      cfg.beta_grid.push_back(parse_double_or(b, full));
  } else if (full == "experiment.tradeoff_pairs") {
    cfg.tradeoff_pairs.clear();
    for (const auto& pair : split_list(value, ',')) {
      const auto parts = split_list(pair, ':');
      if (parts.size() != 2)
        throw ConfigError("tradeoff_pairs entries must look like alpha:beta");
      cfg.tradeoff_pairs.emplace_back(parse_double_or(parts[0], full),
                                      parse_double_or(parts[1], full));
    }
  } else if (full == "experiment.k_list") {
    cfg.k_list.clear();
    for (const auto& k : split_list(value, ','))
      cfg.k_list.push_back(static_cast<std::size_t>(parse_u64_or(k, full)));
  } else if (full == "experiment.ridge_lambda")
    cfg.ridge_lambda = parse_double_or(value, full);
  else if (full == "experiment.usg_social_weight")
    cfg.train_params.usg_social_weight = parse_double_or(value, full);
  else if (full == "experiment.usg_geo_weight")
    cfg.train_params.usg_geo_weight = parse_double_or(value, full);
  else if (full == "experiment.allow_missing_categories")
    cfg.train_params.allow_missing_categories = value == "true" || value == "1";
  else if (full == "experiment.seed")
    cfg.rng_seed = parse_u64_or(value, full);
  else if (full == "experiment.jobs")
    cfg.jobs = static_cast<std::size_t>(parse_u64_or(value, full));
  else if (full == "experiment.tune")
    cfg.tune = value == "true" || value == "1";
  else if (full == "experiment.tune_exposure_floor")
    cfg.tune_exposure_floor = parse_double_or(value, full);
  else if (full == "output.dir")
    cfg.out_dir = value;
  else
    throw ConfigError("unknown config key '" + full + "'");
}

ExperimentConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  ExperimentConfig cfg;
  std::string line, section;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash_pos = line.find('#');
    if (hash_pos != std::string::npos) line.erase(hash_pos);
    while (!line.empty() && std::isspace(static_cast<unsigned char>(line.back())))
      line.pop_back();
    std::size_t start = 0;
    while (start < line.size() && std::isspace(static_cast<unsigned char>(line[start])))
      ++start;
    line.erase(0, start);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": bad section header");
      section = line.substr(1, line.size() - 2);
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": expected key=value");
    std::string key = line.substr(0, eq);
    std::string value = line.substr(eq + 1);
    while (!key.empty() && std::isspace(static_cast<unsigned char>(key.back()))) key.pop_back();
    std::size_t vs = 0;
    while (vs < value.size() && std::isspace(static_cast<unsigned char>(value[vs]))) ++vs;
    value.erase(0, vs);
    try {
      apply_config_line(cfg, section, key, value);
    } catch (const ConfigError& e) {
      throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return cfg;
}

void apply_env_overrides(ExperimentConfig& cfg) {
  if (const char* v = std::getenv("FAIRPOI_SEED")) cfg.rng_seed = parse_u64_or(v, "FAIRPOI_SEED");
  if (const char* v = std::getenv("FAIRPOI_OUT")) cfg.out_dir = v;
  if (const char* v = std::getenv("FAIRPOI_JOBS"))
    cfg.jobs = static_cast<std::size_t>(parse_u64_or(v, "FAIRPOI_JOBS"));
  if (const char* v = std::getenv("FAIRPOI_DELIMITER")) {
    const std::string s = v;
    if (s == "tab") cfg.delimiter = corpus::Delimiter::Tab;
    else if (s == "comma") cfg.delimiter = corpus::Delimiter::Comma;
    else throw ConfigError("FAIRPOI_DELIMITER must be 'tab' or 'comma'");
  }
}

void parallel_for(std::size_t n, std::size_t jobs,
                  const std::function<void(std::size_t)>& fn) {
  if (n == 0) return;
  jobs = std::min(jobs == 0 ? 1 : jobs, n);
  if (jobs == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> workers;
  workers.reserve(jobs);
  for (std::size_t w = 0; w < jobs; ++w) {
    workers.emplace_back([&, w] {
      for (std::size_t i = w; i < n; i += jobs) fn(i);
    });
  }
  for (auto& t : workers) t.join();
}

namespace {

struct WeightPoint {
  double alpha;
  double beta;
  bool from_tradeoff;
};

std::vector<WeightPoint> weight_points(const ExperimentConfig& cfg) {
  std::vector<WeightPoint> pts;
  for (double a : cfg.alpha_grid)
    for (double b : cfg.beta_grid) pts.push_back({a, b, false});
  for (const auto& [a, b] : cfg.tradeoff_pairs) {
    const bool dup = std::any_of(pts.begin(), pts.end(), [&](const WeightPoint& p) {
      return p.alpha == a && p.beta == b;
    });
    if (!dup) pts.push_back({a, b, true});
  }
  return pts;
}

std::string cache_read(const fs::path& file, const std::string& expected_hash) {
  std::ifstream in(file);
  if (!in) return "";
  nlohmann::json j;
  try {
    in >> j;
  } catch (...) {
    return "";
  }
  if (j.value("config_hash", "") != expected_hash) return "";
  return j.value("document", "");
}

void cache_write(const fs::path& file, const std::string& hash, const std::string& doc) {
  nlohmann::json j;
  j["config_hash"] = hash;
  j["document"] = doc;
  std::ofstream out(file);
  out << j.dump(2) << "\n";
}

void write_manifest(const fs::path& out_dir, const ExperimentConfig& cfg, bool complete,
                    const std::string& failed_stage, const std::string& error,
                    std::size_t row_count) {
  nlohmann::json j;
  j["complete"] = complete;
  j["config_hash"] = cfg.hash();
  j["seed"] = cfg.rng_seed;
  j["rows"] = row_count;
  if (!complete) {
    j["failed_stage"] = failed_stage;
    j["error"] = error;
  }
  const auto now = std::chrono::system_clock::now().time_since_epoch();
  j["written_at_epoch_s"] =
      std::chrono::duration_cast<std::chrono::seconds>(now).count();
  std::ofstream out(out_dir / "MANIFEST.json");
  out << j.dump(2) << "\n";
}

metrics::GceResult safe_gce(const std::function<metrics::MetricDistribution()>& build) {
  try {
    return metrics::gce(build(), metrics::uniform_fair(2));
  } catch (const DataError&) {
    metrics::GceResult r;
    r.degenerate = true;
    return r;
  }
}

}  // namespace

SweepResult run_pipeline(const ExperimentConfig& cfg) {
  cfg.validate();
  fs::create_directories(cfg.out_dir);
  const fs::path cache_dir = cfg.out_dir / "cache";
  fs::create_directories(cache_dir);
  const std::string config_hash = cfg.hash();

  SweepResult result;
  result.config_hash = config_hash;
  result.seed = cfg.rng_seed;

  std::string stage = "ingest";
  try {
    Dataset raw;
    if (cfg.checkins_path) {
      raw = corpus::load_dataset(*cfg.checkins_path, *cfg.pois_path, cfg.social_path,
                                 cfg.delimiter);
    } else {
      SyntheticConfig synth = cfg.synthetic;
      synth.rng_seed = cfg.rng_seed;
      raw = corpus::generate_synthetic(synth);
    }

    stage = "filter";
    const Dataset filtered =
        corpus::filter_sparse(raw, cfg.min_users_per_poi, cfg.min_pois_per_user);

    stage = "split";
    const SplitDataset split = corpus::chronological_split(filtered);

    stage = "group";
    const GroupAssignment groups = corpus::assign_groups(split.train);
    result.stats = corpus::dataset_stats(filtered, groups);

    stage = "fit-exposure";
    const auto hist = fairness::build_popularity_histogram(split.train);
    std::map<PoiId, std::uint64_t> train_counts;
    for (const auto& [id, poi] : split.train.pois) train_counts[id] = 0;
    for (const auto& c : split.train.checkins) ++train_counts[c.poi_id];

    std::map<fairness::ExposureFamily, std::map<PoiId, double>> provider_scores;
    for (const auto family : cfg.families) {
      const fs::path cache_file =
          cache_dir / ("exposure_" + fairness::family_name(family) + ".json");
      fairness::ExposureModel model;
      const std::string cached = cache_read(cache_file, config_hash);
      if (!cached.empty()) {
        model = fairness::ExposureModel::from_json(cached);
      } else {
        switch (family) {
          case fairness::ExposureFamily::PowerLaw:
            model = fairness::fit_power_law(hist, cfg.ridge_lambda);
            break;
          case fairness::ExposureFamily::Linear:
            model = fairness::fit_linear(hist);
            break;
          case fairness::ExposureFamily::Logistic:
            model = fairness::fit_logistic(hist);
            break;
        }
        cache_write(cache_file, config_hash, model.to_json());
      }
      auto& scores = provider_scores[family];
      for (const auto& [id, n] : train_counts) scores[id] = model.provider_score(n);
    }

    stage = "consumer-context";
    const auto points = weight_points(cfg);
    const bool need_consumer =
        cfg.tune || std::any_of(points.begin(), points.end(),
                                [](const WeightPoint& p) { return p.beta > 0.0; });
    fairness::ConsumerContext consumer_ctx;
    if (need_consumer)
      consumer_ctx = fairness::build_consumer_context(split.train, groups);

    const auto centroids = metrics::build_centroids(split.train);
    std::map<UserId, std::set<PoiId>> test_visits;
    for (const auto& c : split.test.checkins) test_visits[c.user_id].insert(c.poi_id);
    std::map<UserId, std::set<PoiId>> val_visits;
    for (const auto& c : split.validation.checkins)
      val_visits[c.user_id].insert(c.poi_id);

    const std::size_t k_max = *std::max_element(cfg.k_list.begin(), cfg.k_list.end());
    const std::size_t tune_k =
        std::find(cfg.k_list.begin(), cfg.k_list.end(), 10) != cfg.k_list.end()
            ? 10
            : cfg.k_list.front();

    struct TuneBest {
      double precision = -1.0;
      double alpha = 0.0;
      double beta = 0.0;
    } tune_best;

    for (const auto kind : cfg.models) {
      stage = "train:" + rec::kind_name(kind);
      const fs::path cache_file = cache_dir / ("model_" + rec::kind_name(kind) + ".json");
      rec::BaseModel model = [&] {
        const std::string cached = cache_read(cache_file, config_hash);
        if (!cached.empty())
          return rec::BaseModel::from_json(cached, split.train, split.train.social);
        auto fresh =
            rec::BaseModel::train(kind, split.train, split.train.social, cfg.train_params);
        cache_write(cache_file, config_hash, fresh.to_json());
        return fresh;
      }();

      stage = "score:" + rec::kind_name(kind);
      const auto& users = model.matrix().users;
      std::vector<rec::ScoredCandidates> base(users.size());
      parallel_for(users.size(), cfg.jobs,
                   [&](std::size_t i) { base[i] = model.score_candidates(users[i]); });

      stage = "evaluate:" + rec::kind_name(kind);
      for (const auto& point : points) {
        fairness::FairnessWeights w;
        w.alpha = point.alpha;
        w.beta = point.beta;
        for (const auto family : cfg.families) {
          const auto& fp = provider_scores.at(family);
          fairness::ProviderLookup provider = [&fp](const PoiId& p) { return fp.at(p); };
          fairness::ConsumerLookup consumer = [&](const UserId& u, const PoiId& p) {
            return fairness::consumer_score(consumer_ctx, u, p);
          };

          std::vector<rec::RecommendationList> lists(users.size());
          parallel_for(users.size(), cfg.jobs, [&](std::size_t i) {
            lists[i] = rec::top_k(fairness::rescore(base[i], provider, consumer, w), k_max);
          });

          for (const std::size_t k : cfg.k_list) {
            // top-k lists are prefixes of the top-k_max lists.
            std::vector<rec::RecommendationList> lists_k(users.size());
            for (std::size_t i = 0; i < users.size(); ++i) {
              lists_k[i].user_id = lists[i].user_id;
              const std::size_t take = std::min(k, lists[i].ranked.size());
              lists_k[i].ranked.assign(lists[i].ranked.begin(),
                                       lists[i].ranked.begin() + static_cast<std::ptrdiff_t>(take));
              lists_k[i].short_list = take < k;
            }

            MetricsRow row;
            row.model = rec::kind_name(kind);
            row.alpha = point.alpha;
            row.beta = point.beta;
            row.family = fairness::family_name(family);
            row.k = k;

            SampleVectors samples;
            samples.user_precision.resize(users.size());
            double sum = 0, sum_active = 0, sum_inactive = 0;
            std::size_t n_active = 0, n_inactive = 0;
            static const std::set<PoiId> kNoVisits;
            for (std::size_t i = 0; i < users.size(); ++i) {
              const auto it = test_visits.find(users[i]);
              const auto& visits = it == test_visits.end() ? kNoVisits : it->second;
              const double p = metrics::precision_at_k(lists_k[i], visits, k);
              samples.user_precision[i] = p;
              sum += p;
              if (groups.is_active(users[i])) {
                sum_active += p;
                ++n_active;
              } else {
                sum_inactive += p;
                ++n_inactive;
              }
            }
            row.precision = sum / static_cast<double>(users.size());
            row.precision_active =
                n_active ? sum_active / static_cast<double>(n_active) : 0.0;
            row.precision_inactive =
                n_inactive ? sum_inactive / static_cast<double>(n_inactive) : 0.0;

            const auto exposure = metrics::exposure_table(lists_k, split.train.pois);
            row.exp_longtail =
                metrics::group_mean_exposure(exposure, groups, ItemGroup::LongTail);
            row.exp_shorthead =
                metrics::group_mean_exposure(exposure, groups, ItemGroup::ShortHead);
            samples.poi_exposure.reserve(exposure.exposure.size());
            for (const auto& [poi, e] : exposure.exposure)
              samples.poi_exposure.push_back(static_cast<double>(e));

            row.gce_users = safe_gce(
                [&] { return metrics::user_gain_distribution(lists_k, split.test, groups); });
            row.gce_items =
                safe_gce([&] { return metrics::item_gain_distribution(lists_k, groups); });
            row.mean_median_dist_km =
                metrics::mean_median_distance(lists_k, centroids, split.train.pois);

            result.rows.push_back(row);
            result.samples[{row.model, row.family, row.alpha, row.beta, k}] =
                std::move(samples);

            if (cfg.tune && k == tune_k) {
              double vsum = 0;
              for (std::size_t i = 0; i < users.size(); ++i) {
                const auto it = val_visits.find(users[i]);
                const auto& visits = it == val_visits.end() ? kNoVisits : it->second;
                vsum += metrics::precision_at_k(lists_k[i], visits, k);
              }
              const double vprec = vsum / static_cast<double>(users.size());
              if (row.exp_longtail >= cfg.tune_exposure_floor &&
                  vprec > tune_best.precision) {
                tune_best = {vprec, point.alpha, point.beta};
              }
            }
          }
        }
      }
    }

    if (cfg.tune && tune_best.precision >= 0.0)
      result.tuned_weights = {{tune_best.alpha, tune_best.beta}};

    std::sort(result.rows.begin(), result.rows.end(),
              [](const MetricsRow& a, const MetricsRow& b) {
                return std::tie(a.model, a.family, a.alpha, a.beta, a.k) <
                       std::tie(b.model, b.family, b.alpha, b.beta, b.k);
              });

    write_manifest(cfg.out_dir, cfg, true, "", "", result.rows.size());
  } catch (const std::exception& e) {
    write_manifest(cfg.out_dir, cfg, false, stage, e.what(), result.rows.size());
    if (!result.rows.empty()) emit_tables(result, cfg.out_dir);
    throw Error("[stage:" + stage + "] " + e.what());
  }

  return result;
}

std::vector<fs::path> emit_tables(const SweepResult& r, const fs::path& out_dir) {
  if (r.rows.empty()) throw DataError("emit_tables: no rows");
  fs::create_directories(out_dir);
  std::vector<fs::path> written;

  {
    const fs::path p = out_dir / "results.csv";
    std::ofstream out(p);
    out << "model,alpha,beta,exposure_family,k,precision,precision_active,"
           "precision_inactive,exp_longtail,exp_shorthead,gce_users,gce_items,"
           "mean_median_dist_km\n";
    for (const auto& row : r.rows) {
      out << row.model << "," << fmt_double(row.alpha) << "," << fmt_double(row.beta)
          << "," << row.family << "," << row.k << "," << fmt_metric(row.precision) << ","
          << fmt_metric(row.precision_active) << "," << fmt_metric(row.precision_inactive)
          << "," << fmt_metric(row.exp_longtail) << "," << fmt_metric(row.exp_shorthead)
          << "," << fmt_gce(row.gce_users) << "," << fmt_gce(row.gce_items) << ","
          << fmt_metric(row.mean_median_dist_km) << "\n";
    }
    written.push_back(p);
  }

  {
    const fs::path p = out_dir / "results.json";
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& row : r.rows) {
      nlohmann::json j;
      j["model"] = row.model;
      j["alpha"] = row.alpha;
      j["beta"] = row.beta;
      j["exposure_family"] = row.family;
      j["k"] = row.k;
      j["precision"] = row.precision;
      j["precision_active"] = row.precision_active;
      j["precision_inactive"] = row.precision_inactive;
      j["exp_longtail"] = row.exp_longtail;
      j["exp_shorthead"] = row.exp_shorthead;
      if (row.gce_users.degenerate) j["gce_users"] = nullptr;
      else j["gce_users"] = row.gce_users.value;
      if (row.gce_items.degenerate) j["gce_items"] = nullptr;
      else j["gce_items"] = row.gce_items.value;
      j["mean_median_dist_km"] = row.mean_median_dist_km;
      rows.push_back(std::move(j));
    }
    std::ofstream out(p);
    out << rows.dump(2) << "\n";
    written.push_back(p);
  }

  {
    const fs::path p = out_dir / "table1.csv";
    std::ofstream out(p);
    out << "model,exposure_family,alpha,k,precision,exp_longtail\n";
    for (const auto& row : r.rows) {
      if (row.beta != 0.0) continue;
      out << row.model << "," << row.family << "," << fmt_double(row.alpha) << ","
          << row.k << "," << fmt_metric(row.precision) << ","
          << fmt_metric(row.exp_longtail) << "\n";
    }
    written.push_back(p);
  }

  {
    const fs::path p = out_dir / "table2.csv";
    std::ofstream out(p);
    out << "model,alpha,beta,k,precision,gce_items,gce_users,mean_median_dist_km\n";
    for (const auto& row : r.rows) {
      out << row.model << "," << fmt_double(row.alpha) << "," << fmt_double(row.beta)
          << "," << row.k << "," << fmt_metric(row.precision) << ","
          << fmt_gce(row.gce_items) << "," << fmt_gce(row.gce_users) << ","
          << fmt_metric(row.mean_median_dist_km) << "\n";
    }
    written.push_back(p);
  }

  {
    // Rows with a degenerate GCE have no coordinates in the tradeoff plane
    // and are left out of the scatter file.
    std::vector<metrics::ParetoPoint> pts;
    for (const auto& row : r.rows) {
      if (row.gce_users.degenerate || row.gce_items.degenerate) continue;
      metrics::ParetoPoint pt;
      pt.label = row.model + "|" + row.family + "|a=" + fmt_double(row.alpha) +
                 "|b=" + fmt_double(row.beta) + "|k=" + std::to_string(row.k);
      pt.user_gce = row.gce_users.value;
      pt.item_gce = row.gce_items.value;
      pt.precision = row.precision;
      pts.push_back(pt);
    }
    const fs::path p = out_dir / "points.csv";
    std::ofstream out(p);
    out << "label,user_gce,item_gce,precision,on_front\n";
    if (!pts.empty()) {
      const auto front = metrics::pareto_front(pts);
      std::vector<bool> on(pts.size(), false);
      for (std::size_t i : front) on[i] = true;
      for (std::size_t i = 0; i < pts.size(); ++i) {
        out << pts[i].label << "," << fmt_metric(pts[i].user_gce) << ","
            << fmt_metric(pts[i].item_gce) << "," << fmt_metric(pts[i].precision) << ","
            << (on[i] ? 1 : 0) << "\n";
      }
    }
    written.push_back(p);
  }

  return written;
}

StatTest stat_test_from_name(const std::string& name) {
  if (name == "kruskal") return StatTest::Kruskal;
  if (name == "mannwhitney") return StatTest::MannWhitney;
  if (name == "wilcoxon") return StatTest::Wilcoxon;
  throw ConfigError("unknown test '" + name + "' (expected kruskal, mannwhitney or wilcoxon)");
}

namespace {

const SampleVectors& find_samples(const SweepResult& r, const std::string& model,
                                  const std::string& family, double alpha, double beta,
                                  std::size_t k) {
  const auto it = r.samples.find({model, family, alpha, beta, k});
  if (it == r.samples.end())
    throw ConfigError("no sweep row for model=" + model + " family=" + family +
                      " alpha=" + fmt_double(alpha) + " beta=" + fmt_double(beta) +
                      " k=" + std::to_string(k));
  return it->second;
}

const std::vector<double>& pick_metric(const SampleVectors& s, const std::string& metric) {
  if (metric == "precision") return s.user_precision;
  if (metric == "exposure") return s.poi_exposure;
  throw ConfigError("selector metric must be 'precision' or 'exposure'");
}

}  // namespace

std::vector<ComparisonRow> compare_models(const SweepResult& r, StatTest test,
                                          const CompareSelector& sel) {
  std::set<std::string> models, families;
  for (const auto& row : r.rows) {
    models.insert(row.model);
    families.insert(row.family);
  }

  std::vector<ComparisonRow> out;
  for (const auto& model : models) {
    if (test == StatTest::Kruskal) {
      std::vector<std::vector<double>> groups;
      std::string label;
      for (const auto& fam : families) {
        groups.push_back(
            pick_metric(find_samples(r, model, fam, sel.alpha, sel.beta, sel.k), sel.metric));
        label += (label.empty() ? "" : "+") + fam;
      }
      ComparisonRow row{model, sel.metric, label, "", stats::kruskal_wallis(groups), false};
      row.significant = row.result.p_value < 0.05;
      out.push_back(std::move(row));
    } else if (test == StatTest::MannWhitney) {
      std::vector<std::string> fams(families.begin(), families.end());
      for (std::size_t i = 0; i < fams.size(); ++i) {
        for (std::size_t j = i + 1; j < fams.size(); ++j) {
          const auto& a =
              pick_metric(find_samples(r, model, fams[i], sel.alpha, sel.beta, sel.k), sel.metric);
          const auto& b =
              pick_metric(find_samples(r, model, fams[j], sel.alpha, sel.beta, sel.k), sel.metric);
          ComparisonRow row{model, sel.metric, fams[i], fams[j],
                            stats::mann_whitney_u(a, b), false};
          row.significant = row.result.p_value < 0.05;
          out.push_back(std::move(row));
        }
      }
    } else {
      for (const auto& fam : families) {
        const auto& a =
            pick_metric(find_samples(r, model, fam, sel.alpha, sel.beta, sel.k), sel.metric);
        const auto& b = pick_metric(
            find_samples(r, model, fam, sel.alpha_b, sel.beta_b, sel.k), sel.metric);
        if (a.size() != b.size())
          throw DataError("paired comparison needs equal sample lengths");
        std::vector<double> diffs(a.size());
        bool any_nonzero = false;
        for (std::size_t i = 0; i < a.size(); ++i) {
          diffs[i] = a[i] - b[i];
          any_nonzero |= diffs[i] != 0.0;
        }
        stats::TestResult result;
        if (any_nonzero) {
          result = stats::wilcoxon_signed_rank(diffs);
        } else {
          // The two configurations produced identical samples.
          result.statistic = 0.0;
          result.p_value = 1.0;
          result.n = {diffs.size()};
          result.method = "degenerate: all differences zero";
        }
        ComparisonRow row{model, sel.metric,
                          fam + "@a=" + fmt_double(sel.alpha) + ",b=" + fmt_double(sel.beta),
                          fam + "@a=" + fmt_double(sel.alpha_b) + ",b=" + fmt_double(sel.beta_b),
                          result, false};
        row.significant = row.result.p_value < 0.05;
        out.push_back(std::move(row));
      }
    }
  }
  return out;
}

std::string comparisons_to_csv(const std::vector<ComparisonRow>& rows) {
  std::string out = "model,metric,left,right,statistic,p_value,significant\n";
  for (const auto& r : rows) {
    out += r.model + "," + r.metric + "," + r.left + "," + r.right + "," +
           fmt_metric(r.result.statistic) + "," + fmt_metric(r.result.p_value) + "," +
           (r.significant ? "1" : "0") + "\n";
  }
  return out;
}

}  // namespace fairpoi::runner
