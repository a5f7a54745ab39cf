#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fairpoi/corpus.hpp"
#include "fairpoi/fairness.hpp"
#include "fairpoi/metrics.hpp"
#include "fairpoi/recommenders.hpp"
#include "fairpoi/stats.hpp"
#include "fairpoi/types.hpp"

namespace fairpoi::runner {

struct ExperimentConfig {
  // Data source: dataset files, or a synthetic config when no paths given.
  std::optional<std::filesystem::path> checkins_path;
  std::optional<std::filesystem::path> pois_path;
  std::optional<std::filesystem::path> social_path;
  corpus::Delimiter delimiter = corpus::Delimiter::Tab;
  SyntheticConfig synthetic;

  std::size_t min_users_per_poi = 10;
  std::size_t min_pois_per_user = 10;

  std::vector<rec::ModelKind> models = {rec::ModelKind::Popularity};
  std::vector<fairness::ExposureFamily> families = {
      fairness::ExposureFamily::PowerLaw, fairness::ExposureFamily::Linear,
      fairness::ExposureFamily::Logistic};
  std::vector<double> alpha_grid = {0.0, 0.25, 0.5, 0.75, 1.0};
  std::vector<double> beta_grid = {0.0};
  std::vector<std::pair<double, double>> tradeoff_pairs;
  std::vector<std::size_t> k_list = {5, 10, 20};
  double ridge_lambda = 10.0;
  rec::TrainParams train_params;

  std::filesystem::path out_dir = "out";
  std::uint64_t rng_seed = 1;
  std::size_t jobs = 1;

  // Optional (alpha, beta) selection on the validation split: maximize
  // validation precision@10 subject to a long-tail exposure floor.
  bool tune = false;
  double tune_exposure_floor = 0.0;

  void validate() const;
  // Canonical key=value rendering; also the hashing input.
  std::string canonical() const;
  std::string hash() const;  // FNV-1a 64 over canonical(), hex
};

// Flat key=value file with [section] headers; '#' starts a comment.
// Unknown keys are an error so typos do not silently fall back to defaults.
ExperimentConfig load_config(const std::filesystem::path& path);
void apply_config_line(ExperimentConfig& cfg, const std::string& section,
                       const std::string& key, const std::string& value);
// FAIRPOI_SEED / FAIRPOI_OUT / FAIRPOI_JOBS / FAIRPOI_DELIMITER.
void apply_env_overrides(ExperimentConfig& cfg);

struct MetricsRow {
  std::string model;
  double alpha = 0.0;
  double beta = 0.0;
  std::string family;
  std::size_t k = 0;
  double precision = 0.0;
  double precision_active = 0.0;
  double precision_inactive = 0.0;
  double exp_longtail = 0.0;
  double exp_shorthead = 0.0;
  metrics::GceResult gce_users;
  metrics::GceResult gce_items;
  double mean_median_dist_km = 0.0;
};

// Per-user precision and per-POI exposure vectors backing the significance
// tests; both sorted by entity id so paired tests align across rows.
struct SampleVectors {
  std::vector<double> user_precision;
  std::vector<double> poi_exposure;
};

struct RowKey {
  std::string model;
  std::string family;
  double alpha = 0.0;
  double beta = 0.0;
  std::size_t k = 0;
  auto operator<=>(const RowKey&) const = default;
};

struct SweepResult {
  std::vector<MetricsRow> rows;
  std::map<RowKey, SampleVectors> samples;
  std::string config_hash;
  std::uint64_t seed = 0;
  StatsSummary stats;
  std::optional<std::pair<double, double>> tuned_weights;
};

// ingest/synth -> filter -> split -> group -> train once per model ->
// fit exposure models once per family -> rescore/evaluate over the grid.
// Deterministic for a fixed seed and config. Trained models and exposure
// fits are cached in out_dir/cache keyed by the config hash.
SweepResult run_pipeline(const ExperimentConfig& cfg);

// results.csv (full MetricsReport rows), table1.csv (alpha sweep at
// beta = 0), table2.csv (tradeoff pairs), points.csv (Pareto scatter with
// an on_front column). Returns the file paths written.
std::vector<std::filesystem::path> emit_tables(const SweepResult& r,
                                               const std::filesystem::path& out_dir);

enum class StatTest { Kruskal, MannWhitney, Wilcoxon };
StatTest stat_test_from_name(const std::string& name);

struct CompareSelector {
  std::string metric = "precision";  // or "exposure"
  double alpha = 0.25;
  double beta = 0.0;
  std::size_t k = 10;
  // Wilcoxon compares (alpha, beta) against this second weight pair.
  double alpha_b = 0.0;
  double beta_b = 0.0;
};

struct ComparisonRow {
  std::string model;
  std::string metric;
  std::string left;
  std::string right;
  stats::TestResult result;
  bool significant = false;  // p < 0.05, two-sided, uncorrected
};

// Kruskal: one row per model over all families. MannWhitney: one row per
// model and family pair. Wilcoxon: one row per (model, family) pairing the
// two weight configurations user-by-user.
std::vector<ComparisonRow> compare_models(const SweepResult& r, StatTest test,
                                          const CompareSelector& sel);

std::string comparisons_to_csv(const std::vector<ComparisonRow>& rows);

// Bounded fan-out with deterministic result placement (results land in
// per-index slots; threads never share mutable state).
void parallel_for(std::size_t n, std::size_t jobs,
                  const std::function<void(std::size_t)>& fn);

}  // namespace fairpoi::runner
