// Python bindings for the fairpoi core: dataset handling, base recommenders,
// fairness re-scoring, metrics, the nonparametric tests, and the sweep
// pipeline.

#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "fairpoi/corpus.hpp"
#include "fairpoi/error.hpp"
#include "fairpoi/fairness.hpp"
#include "fairpoi/geo.hpp"
#include "fairpoi/metrics.hpp"
#include "fairpoi/recommenders.hpp"
#include "fairpoi/runner.hpp"
#include "fairpoi/stats.hpp"

namespace py = pybind11;
using namespace fairpoi;

namespace {

corpus::Delimiter delim_from(const std::string& s) {
  if (s == "tab") return corpus::Delimiter::Tab;
  if (s == "comma") return corpus::Delimiter::Comma;
  throw ConfigError("delimiter must be 'tab' or 'comma'");
}

py::dict stats_dict(const StatsSummary& s) {
  py::dict d;
  d["users"] = s.users;
  d["pois"] = s.pois;
  d["checkins"] = s.checkins;
  d["sparsity"] = s.sparsity;
  d["active_users"] = s.active_users;
  d["inactive_users"] = s.inactive_users;
  d["short_head_pois"] = s.short_head_pois;
  d["long_tail_pois"] = s.long_tail_pois;
  d["active_checkins"] = s.active_checkins;
  d["inactive_checkins"] = s.inactive_checkins;
  d["short_head_checkins"] = s.short_head_checkins;
  d["long_tail_checkins"] = s.long_tail_checkins;
  return d;
}

py::dict row_dict(const runner::MetricsRow& r) {
  py::dict d;
  d["model"] = r.model;
  d["alpha"] = r.alpha;
  d["beta"] = r.beta;
  d["exposure_family"] = r.family;
  d["k"] = r.k;
  d["precision"] = r.precision;
  d["precision_active"] = r.precision_active;
  d["precision_inactive"] = r.precision_inactive;
  d["exp_longtail"] = r.exp_longtail;
  d["exp_shorthead"] = r.exp_shorthead;
  d["gce_users"] = r.gce_users.degenerate ? py::object(py::none())
                                          : py::object(py::float_(r.gce_users.value));
  d["gce_items"] = r.gce_items.degenerate ? py::object(py::none())
                                          : py::object(py::float_(r.gce_items.value));
  d["mean_median_dist_km"] = r.mean_median_dist_km;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Multi-sided fairness post-filtering for POI recommendation";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<DataError>(m, "DataError", PyExc_ValueError);
  py::register_exception<CapabilityError>(m, "CapabilityError", PyExc_ValueError);

  py::class_<Dataset>(m, "Dataset")
      .def_property_readonly("n_users", [](const Dataset& d) { return d.users.size(); })
      .def_property_readonly("n_pois", [](const Dataset& d) { return d.pois.size(); })
      .def_property_readonly("n_checkins", [](const Dataset& d) { return d.checkins.size(); })
      .def_property_readonly("n_social_edges",
                             [](const Dataset& d) { return d.social.edges.size(); })
      .def("users", [](const Dataset& d) {
        return std::vector<std::string>(d.users.begin(), d.users.end());
      })
      .def("__repr__", [](const Dataset& d) {
        return "<fairpoi.Dataset users=" + std::to_string(d.users.size()) +
               " pois=" + std::to_string(d.pois.size()) +
               " checkins=" + std::to_string(d.checkins.size()) + ">";
      });

  py::class_<SplitDataset>(m, "SplitDataset")
      .def_readonly("train", &SplitDataset::train)
      .def_readonly("validation", &SplitDataset::validation)
      .def_readonly("test", &SplitDataset::test);

  py::class_<GroupAssignment>(m, "GroupAssignment")
      .def("is_active", &GroupAssignment::is_active)
      .def("is_short_head", &GroupAssignment::is_short_head);

  m.def(
      "load_dataset",
      [](const std::string& checkins, const std::string& pois,
         const std::optional<std::string>& social, const std::string& delimiter) {
        std::optional<std::filesystem::path> sp;
        if (social) sp = *social;
        return corpus::load_dataset(checkins, pois, sp, delim_from(delimiter));
      },
      py::arg("checkins"), py::arg("pois"), py::arg("social") = py::none(),
      py::arg("delimiter") = "tab");

  m.def("filter_sparse", &corpus::filter_sparse, py::arg("dataset"),
        py::arg("min_users_per_poi") = 10, py::arg("min_pois_per_user") = 10);

  m.def(
      "chronological_split",
      [](const Dataset& d, double train, double validation, double test) {
        return corpus::chronological_split(d, {train, validation, test});
      },
      py::arg("dataset"), py::arg("train") = 0.7, py::arg("validation") = 0.2,
      py::arg("test") = 0.1);

  m.def("assign_groups", &corpus::assign_groups, py::arg("train"));

  m.def(
      "generate_synthetic",
      [](std::size_t users, std::size_t pois, double exponent, std::size_t clusters,
         double mean_checkins, double social_p, std::uint64_t seed) {
        SyntheticConfig cfg;
        cfg.n_users = users;
        cfg.n_pois = pois;
        cfg.power_law_exponent = exponent;
        cfg.n_geo_clusters = clusters;
        cfg.mean_checkins_per_user = mean_checkins;
        cfg.social_edge_probability = social_p;
        cfg.rng_seed = seed;
        return corpus::generate_synthetic(cfg);
      },
      py::arg("users") = 100, py::arg("pois") = 200, py::arg("exponent") = -1.5,
      py::arg("clusters") = 3, py::arg("mean_checkins") = 30.0,
      py::arg("social_p") = 0.02, py::arg("seed") = 1);

  m.def(
      "dataset_stats",
      [](const Dataset& d, const GroupAssignment& g) {
        return stats_dict(corpus::dataset_stats(d, g));
      },
      py::arg("dataset"), py::arg("groups"));

  // Recommenders.
  py::class_<rec::ScoredCandidates>(m, "ScoredCandidates")
      .def_readonly("user_id", &rec::ScoredCandidates::user_id)
      .def_readonly("entries", &rec::ScoredCandidates::entries);

  py::class_<rec::RecommendationList>(m, "RecommendationList")
      .def_readonly("user_id", &rec::RecommendationList::user_id)
      .def_readonly("ranked", &rec::RecommendationList::ranked)
      .def_readonly("short_list", &rec::RecommendationList::short_list);

  py::class_<rec::BaseModel>(m, "BaseModel")
      .def_property_readonly("kind",
                             [](const rec::BaseModel& b) { return rec::kind_name(b.kind()); })
      .def("score_candidates", &rec::BaseModel::score_candidates, py::arg("user_id"))
      .def("users", [](const rec::BaseModel& b) { return b.matrix().users; })
      .def("to_json", &rec::BaseModel::to_json);

  m.def(
      "train_model",
      [](const std::string& kind, const Dataset& train, double usg_social_weight,
         double usg_geo_weight, bool allow_missing_categories) {
        rec::TrainParams p;
        p.usg_social_weight = usg_social_weight;
        p.usg_geo_weight = usg_geo_weight;
        p.allow_missing_categories = allow_missing_categories;
        return rec::BaseModel::train(rec::kind_from_name(kind), train, train.social, p);
      },
      py::arg("kind"), py::arg("train"), py::arg("usg_social_weight") = 0.1,
      py::arg("usg_geo_weight") = 0.1, py::arg("allow_missing_categories") = false);

  m.def("top_k", &rec::top_k, py::arg("candidates"), py::arg("k"));

  // Fairness.
  py::class_<fairness::PopularityHistogram>(m, "PopularityHistogram")
      .def_readonly("points", &fairness::PopularityHistogram::points)
      .def_readonly("zero_count", &fairness::PopularityHistogram::zero_count)
      .def("total_pois", &fairness::PopularityHistogram::total_pois);

  py::class_<fairness::ExposureModel>(m, "ExposureModel")
      .def_property_readonly(
          "family",
          [](const fairness::ExposureModel& e) { return fairness::family_name(e.family); })
      .def_readonly("p0", &fairness::ExposureModel::p0)
      .def_readonly("p1", &fairness::ExposureModel::p1)
      .def_readonly("score_ceiling", &fairness::ExposureModel::score_ceiling)
      .def("provider_score", &fairness::ExposureModel::provider_score,
           py::arg("checkin_count"))
      .def("to_json", &fairness::ExposureModel::to_json);

  m.def("build_popularity_histogram", &fairness::build_popularity_histogram,
        py::arg("train"));
  m.def("fit_power_law", &fairness::fit_power_law, py::arg("histogram"),
        py::arg("ridge_lambda") = 10.0);
  m.def("fit_linear", &fairness::fit_linear, py::arg("histogram"));
  m.def("fit_logistic", &fairness::fit_logistic, py::arg("histogram"));

  py::class_<fairness::ConsumerContext>(m, "ConsumerContext");
  m.def("build_consumer_context", &fairness::build_consumer_context, py::arg("train"),
        py::arg("groups"));
  m.def("consumer_score", &fairness::consumer_score, py::arg("context"),
        py::arg("user_id"), py::arg("poi_id"));

  m.def(
      "rescore",
      [](const rec::ScoredCandidates& base, const std::map<PoiId, double>& provider,
         const fairness::ConsumerContext* consumer, double alpha, double beta) {
        fairness::FairnessWeights w;
        w.alpha = alpha;
        w.beta = beta;
        fairness::ProviderLookup fp = [&](const PoiId& p) {
          const auto it = provider.find(p);
          return it == provider.end() ? 0.0 : it->second;
        };
        fairness::ConsumerLookup fc = [&](const UserId& u, const PoiId& p) {
          return consumer ? fairness::consumer_score(*consumer, u, p) : 0.0;
        };
        return fairness::rescore(base, fp, fc, w);
      },
      py::arg("base"), py::arg("provider_scores"), py::arg("consumer_context") = nullptr,
      py::arg("alpha") = 0.0, py::arg("beta") = 0.0);

  // Metrics.
  m.def(
      "precision_at_k",
      [](const rec::RecommendationList& recs, const std::set<PoiId>& test_visits,
         std::size_t k) { return metrics::precision_at_k(recs, test_visits, k); },
      py::arg("recommendations"), py::arg("test_visits"), py::arg("k"));

  m.def(
      "gce",
      [](const std::vector<double>& observed, const std::vector<double>& fair,
         double order) -> py::object {
        metrics::MetricDistribution d;
        d.mass = observed;
        d.labels.resize(observed.size());
        const auto r = metrics::gce(d, fair, order);
        if (r.degenerate) return py::none();
        return py::float_(r.value);
      },
      py::arg("observed"), py::arg("fair"), py::arg("order") = 2.0);

  m.def("haversine_km", &haversine_km, py::arg("lat1"), py::arg("lon1"), py::arg("lat2"),
        py::arg("lon2"));

  m.def(
      "pareto_front",
      [](const std::vector<std::pair<double, double>>& pts) {
        std::vector<metrics::ParetoPoint> v;
        v.reserve(pts.size());
        for (const auto& [u, i] : pts) v.push_back({"", u, i, 0.0});
        return metrics::pareto_front(v);
      },
      py::arg("points"));

  // Stats.
  auto result_dict = [](const stats::TestResult& r) {
    py::dict d;
    d["statistic"] = r.statistic;
    d["p_value"] = r.p_value;
    d["n"] = r.n;
    d["method"] = r.method;
    return d;
  };
  m.def(
      "kruskal_wallis",
      [result_dict](const std::vector<std::vector<double>>& groups) {
        return result_dict(stats::kruskal_wallis(groups));
      },
      py::arg("groups"));
  m.def(
      "mann_whitney_u",
      [result_dict](const std::vector<double>& a, const std::vector<double>& b) {
        return result_dict(stats::mann_whitney_u(a, b));
      },
      py::arg("a"), py::arg("b"));
  m.def(
      "wilcoxon_signed_rank",
      [result_dict](const std::vector<double>& diffs) {
        return result_dict(stats::wilcoxon_signed_rank(diffs));
      },
      py::arg("paired_differences"));

  // Sweep pipeline.
  m.def(
      "run_sweep",
      [](const std::optional<std::string>& config, const std::string& out_dir,
         std::uint64_t seed, const py::kwargs& kwargs) {
        runner::ExperimentConfig cfg;
        if (config) cfg = runner::load_config(*config);
        cfg.out_dir = out_dir;
        cfg.rng_seed = seed;
        for (const auto& [key_obj, value_obj] : kwargs) {
          const auto key = key_obj.cast<std::string>();
          const auto value = py::str(value_obj).cast<std::string>();
          std::string section = "experiment";
          if (key.rfind("synthetic_", 0) == 0) {
            section = "synthetic";
            runner::apply_config_line(cfg, section, key.substr(10), value);
          } else {
            runner::apply_config_line(cfg, section, key, value);
          }
        }
        const auto result = runner::run_pipeline(cfg);
        runner::emit_tables(result, cfg.out_dir);
        py::list rows;
        for (const auto& r : result.rows) rows.append(row_dict(r));
        py::dict out;
        out["rows"] = rows;
        out["config_hash"] = result.config_hash;
        out["seed"] = result.seed;
        out["stats"] = stats_dict(result.stats);
        return out;
      },
      py::arg("config") = py::none(), py::arg("out_dir") = "out", py::arg("seed") = 1);

  m.attr("__version__") = "0.1.0";
}
