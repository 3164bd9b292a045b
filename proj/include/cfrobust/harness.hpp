#pragma once

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <ctime>
#include <exception>
#include <filesystem>
#include <functional>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "cfrobust/cfgen.hpp"
#include "cfrobust/config.hpp"
#include "cfrobust/core.hpp"
#include "cfrobust/csv.hpp"
#include "cfrobust/datagen.hpp"
#include "cfrobust/ingest.hpp"
#include "cfrobust/models.hpp"
#include "cfrobust/numeric.hpp"
#include "cfrobust/robustness.hpp"
#include "cfrobust/stats.hpp"

namespace cfrobust {

inline constexpr const char* kVersion = "0.1.0";

// ---------------------------------------------------------------------------
// Worker pool
// ---------------------------------------------------------------------------

/// Worker count from CFROBUST_WORKERS, else the hardware concurrency.
inline std::size_t worker_count() {
  if (const char* env = std::getenv("CFROBUST_WORKERS")) {
    const auto v = csv::parse_double(env);
    if (v && *v >= 1.0) return static_cast<std::size_t>(*v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

/// Runs fn(i) for i in [0, n) on up to `workers` threads. The first exception
/// thrown by any call is rethrown after all threads have joined.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t workers, Fn fn) {
  workers = std::max<std::size_t>(1, std::min(workers, n));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (;;) {
        const auto i = next.fetch_add(1);
        if (i >= n) return;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!error) error = std::current_exception();
          next = n;
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

// ---------------------------------------------------------------------------
// Results
// ---------------------------------------------------------------------------

struct AccuracyRow {
  int replicate = 0;
  std::string model;
  int level = 0;
  double feature_sigma = 0.0;
  double label_flip_rate = 0.0;
  double accuracy = 0.0;
};

struct CeRow {
  int replicate = 0;
  std::string model;
  std::string method;
  int level = 0;
  Group group = Group::tn;
  Counterfactual ce;
  std::vector<std::string> columns;  // column names of ce.original / ce.point
};

struct CompletenessRow {
  std::string model;
  std::string method;
  std::size_t attempts = 0;
  std::size_t valid = 0;
  double completeness() const { return attempts ? static_cast<double>(valid) / static_cast<double>(attempts) : 0.0; }
  bool excluded = false;
};

struct SeedRecord {
  int replicate = 0;
  std::uint64_t data = 0, noise = 0, split = 0, model = 0, ce = 0;
};

struct StageError : Error {
  std::string stage;
  StageError(std::string stage_name, const std::string& what) : Error(stage_name + ": " + what), stage(std::move(stage_name)) {}
};

struct SweepResult {
  ExperimentConfig config;
  std::vector<NoiseSpec> schedule;
  std::vector<std::string> base_columns;  // level-0 encoded columns
  std::vector<AccuracyRow> accuracy;
  std::vector<CeRow> counterfactuals;
  std::vector<PairedDistanceRecord> records;  // TN/FN records of non-excluded combos, level >= 1
  std::vector<CompletenessRow> completeness;
  std::vector<SeedRecord> seeds;
  std::vector<std::string> warnings;
  std::vector<std::pair<std::string, double>> timings;
};

inline std::string combo_name(const std::string& model, const std::string& method) { return model + ":" + method; }

namespace detail {

struct FittedModel {
  std::string name;
  std::unique_ptr<Classifier> model;
};

inline std::unique_ptr<Classifier> fit_named_model(const std::string& name, const Dataset& train, const ModelConfig& mc,
                                                   std::uint64_t seed) {
  if (name == "lr") return std::make_unique<LinearModel>(fit_logistic(train, mc.lr_l2));
  if (name == "blr") return std::make_unique<BayesianLinearModel>(fit_bayes_logistic(train, mc.blr_prior_variance));
  if (name == "rf") {
    auto p = mc.rf;
    p.seed = seed;
    return std::make_unique<RandomForest>(fit_random_forest(train, p));
  }
  if (name == "mlp") {
    auto p = mc.mlp;
    p.seed = seed;
    return std::make_unique<Mlp>(fit_mlp(train, p));
  }
  throw ParameterError("unknown model " + name);
}

inline std::vector<std::string> column_names(const FeatureSchema& s) {
  std::vector<std::string> out;
  for (const auto& c : s.columns()) out.push_back(c.name);
  return out;
}

// Weights of `base` restricted to the columns of `schema` (matched by name).
inline WeightVector project_weights(const WeightVector& base, const FeatureSchema& base_schema, const FeatureSchema& schema) {
  WeightVector w;
  w.reference_split_id = base.reference_split_id;
  w.w.resize(static_cast<Eigen::Index>(schema.size()));
  for (std::size_t j = 0; j < schema.size(); ++j) {
    const auto k = base_schema.index_of(schema.column(j).name);
    if (!k) throw DataError("column '" + schema.column(j).name + "' missing from the reference schema");
    w.w[static_cast<Eigen::Index>(j)] = base.w[static_cast<Eigen::Index>(*k)];
  }
  return w;
}

inline Vector project_point(const Vector& v, const FeatureSchema& from, const FeatureSchema& to) {
  Vector out(static_cast<Eigen::Index>(to.size()));
  for (std::size_t j = 0; j < to.size(); ++j) {
    const auto k = from.index_of(to.column(j).name);
    if (!k) throw DataError("column '" + to.column(j).name + "' missing from the source schema");
    out[static_cast<Eigen::Index>(j)] = v[static_cast<Eigen::Index>(*k)];
  }
  return out;
}

class StageTimer {
 public:
  explicit StageTimer(std::vector<std::pair<std::string, double>>& sink) : sink_(sink) {}
  template <typename Fn>
  auto run(const std::string& stage, Fn fn) {
    const auto t0 = std::chrono::steady_clock::now();
    auto finish = [&] {
      sink_.emplace_back(stage, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    };
    try {
      if constexpr (std::is_void_v<decltype(fn())>) {
        fn();
        finish();
      } else {
        auto r = fn();
        finish();
        return r;
      }
    } catch (const StageError&) {
      throw;
    } catch (const std::exception& e) {
      throw StageError(stage, e.what());
    }
  }

 private:
  std::vector<std::pair<std::string, double>>& sink_;
};

}  // namespace detail

/// Runs the full sweep in memory: for every replicate and noise level, noisy
/// data, per-level model fits, accuracy, counterfactuals for test rows
/// predicted away from the target class, and distance records against the
/// level-0 counterfactuals. Combos whose pooled completeness falls below
/// min_completeness contribute no records.
/// Called once per counterfactual with the model that produced it and its
/// schema, in a deterministic order.
using CeObserver = std::function<void(const CeRow&, const Classifier&, const FeatureSchema&)>;

inline SweepResult run_sweep(const ExperimentConfig& cfg, const CeObserver& observe = {}) {
  cfg.validate();
  SweepResult res;
  res.config = cfg;
  res.schedule = build_noise_schedule(cfg.noise.n_levels, cfg.noise.max_sigma, cfg.noise.max_flip, cfg.noise.kind, cfg.noise.df);
  detail::StageTimer timer(res.timings);
  const auto workers = worker_count();

  std::map<std::pair<std::string, std::string>, CompletenessRow> completeness;
  for (const auto& m : cfg.models.names)
    for (const auto& k : cfg.methods.names)
      if (compatible(m, k)) completeness[{m, k}] = {m, k, 0, 0, false};

  std::vector<PairedDistanceRecord> all_records;
  std::size_t zero_norm_baselines = 0;

  for (std::size_t rep = 0; rep < cfg.n_replicates; ++rep) {
    const auto r = static_cast<int>(rep);
    const auto rs = stream_seed({cfg.seed, 0x524550ULL, rep});
    SeedRecord seeds{r, stream_seed({rs, 1}), stream_seed({rs, 2}), stream_seed({rs, 3}), stream_seed({rs, 4}),
                     stream_seed({rs, 5})};
    res.seeds.push_back(seeds);
    const std::string tag = "replicate" + std::to_string(r) + "/";

    // Base data and the latent representation used for noise injection.
    std::optional<MockData> mock;
    Dataset base;
    timer.run(tag + "data", [&] {
      if (cfg.dataset == DatasetKind::mock) {
        auto spec = cfg.mock;
        spec.seed = seeds.data;
        mock = make_mock(spec);
        base = mock->clean;
      } else {
        auto ic = cfg.ingest;
        ic.seed = seeds.data;
        base = preprocess(load_csv(ic), ic);
      }
    });
    if (rep == 0) res.base_columns = detail::column_names(base.schema);

    std::vector<std::string> omit_names;
    if (cfg.noise.omit_columns > 0) {
      if (mock) {
        omit_names.assign(mock->omittable.begin(), mock->omittable.begin() + static_cast<std::ptrdiff_t>(cfg.noise.omit_columns));
      } else {
        const auto& cont = base.schema.continuous_indices();
        if (cfg.noise.omit_columns >= cont.size()) throw StageError(tag + "data", "omit_columns leaves no continuous column");
        for (std::size_t k = 0; k < cfg.noise.omit_columns; ++k) omit_names.push_back(base.schema.column(cont[k]).name);
      }
    }

    const auto split = timer.run(tag + "split", [&] { return train_test_split(base, cfg.test_fraction, seeds.split); });
    const std::unordered_set<InstanceId> train_ids(split.train.ids.begin(), split.train.ids.end());
    const std::unordered_set<InstanceId> test_ids(split.test.ids.begin(), split.test.ids.end());
    const auto weights = feature_weights(split.train, "replicate" + std::to_string(r) + "/level0/train");

    // Level-0 counterfactuals per combo, keyed by id, for pairing.
    std::map<std::pair<std::string, std::string>, std::vector<Counterfactual>> baseline;
    FeatureSchema base_schema = base.schema;

    for (const auto& level_spec : res.schedule) {
      const int level = level_spec.level;
      const std::string ltag = tag + "level" + std::to_string(level) + "/";
      NoiseSpec spec = level_spec;
      Dataset noisy = timer.run(ltag + "noise", [&] {
        if (level == 0) return base;
        if (mock) {
          for (const auto& n : omit_names) spec.omitted_columns.insert(*mock->latent.schema.index_of(n));
          return apply_discretization(inject_noise(mock->latent, spec, seeds.noise), mock->plans);
        }
        for (const auto& n : omit_names) spec.omitted_columns.insert(*base.schema.index_of(n));
        return inject_real_noise(base, spec, seeds.noise);
      });
      const Dataset train = noisy.subset_by_ids(train_ids);
      const Dataset test = noisy.subset_by_ids(test_ids);
      const auto w = detail::project_weights(weights, base_schema, noisy.schema);
      const auto columns = detail::column_names(noisy.schema);

      for (const auto& model_name : cfg.models.names) {
        const std::string mtag = ltag + model_name;
        const auto model_seed = stream_seed({seeds.model, static_cast<std::uint64_t>(level), fnv1a(model_name)});
        const auto model = timer.run(mtag + "/fit", [&] { return detail::fit_named_model(model_name, train, cfg.models, model_seed); });
        const double acc = accuracy(*model, test);
        res.accuracy.push_back({r, model_name, level, spec.feature_sigma, spec.label_flip_rate, acc});

        const auto pred = predict_all(*model, test);
        std::vector<std::size_t> rows;
        for (std::size_t i = 0; i < test.n(); ++i)
          if (pred[i] != cfg.target_class) rows.push_back(i);

        for (const auto& method : cfg.methods.names) {
          if (!compatible(model_name, method)) continue;
          const std::string ktag = mtag + "/" + method;
          std::vector<Counterfactual> out(rows.size());
          timer.run(ktag, [&] {
            CESearchConfig sc;
            sc.epsilon_margin = cfg.methods.epsilon;
            sc.budget = cfg.methods.random_budget;
            sc.target_class = cfg.target_class;
            sc.seed = stream_seed({seeds.ce, static_cast<std::uint64_t>(level), fnv1a(model_name), fnv1a(method)});
            std::optional<NeighborPool> pool;
            if (method == "nice") pool = make_neighbor_pool(*model, train, cfg.target_class);
            const auto* lin = dynamic_cast<const LinearModel*>(model.get());
            const auto* bayes = dynamic_cast<const BayesianLinearModel*>(model.get());
            parallel_for(rows.size(), workers, [&](std::size_t k) {
              const auto i = rows[k];
              const Vector x = test.row(i);
              const auto id = test.ids[i];
              if (method == "milp") out[k] = milp_counterfactual(*lin, x, w, noisy.schema, sc, id);
              else if (method == "milp_mean") out[k] = milp_mean_counterfactual(*bayes, x, w, noisy.schema, sc, id);
              else if (method == "milp_marg")
                out[k] = milp_marginal_counterfactual(*bayes, x, w, noisy.schema, sc,
                                                      {cfg.methods.marg_samples, cfg.methods.marg_fraction}, id);
              else if (method == "nice") out[k] = nice_counterfactual(*model, *pool, x, w, noisy.schema, sc, id);
              else out[k] = random_search_counterfactual(*model, x, w, noisy.schema, sc, {}, id);
            });
          });

          auto& comp = completeness[{model_name, method}];
          std::map<InstanceId, Group> group_of;
          for (std::size_t k = 0; k < rows.size(); ++k) {
            const auto i = rows[k];
            const Group g = test.y[i] == cfg.target_class ? Group::fn : Group::tn;
            group_of[test.ids[i]] = g;
            ++comp.attempts;
            comp.valid += out[k].valid;
            res.counterfactuals.push_back({r, model_name, method, level, g, out[k], columns});
            if (observe) observe(res.counterfactuals.back(), *model, noisy.schema);
          }

          if (level == 0) {
            baseline[{model_name, method}] = out;
            continue;
          }
          const auto& base_ce = baseline[{model_name, method}];
          for (const auto& pair : pair_instances(base_ce, out)) {
            const Vector b = detail::project_point(pair.base->point, base_schema, noisy.schema);
            PairedDistanceRecord rec;
            rec.replicate = r;
            rec.id = pair.id;
            rec.noise_level = level;
            rec.model = model_name;
            rec.method = method;
            rec.group = group_of.at(pair.id);
            rec.distance = weighted_l1(pair.noisy->point, b, w);
            try {
              rec.relative_distance = relative_distance(pair.noisy->point, b, w, pair.id);
            } catch (const DataError&) {
              ++zero_norm_baselines;
              continue;
            }
            all_records.push_back(rec);
          }
        }
      }
    }
  }

  for (auto& [key, row] : completeness) {
    row.excluded = row.completeness() < cfg.min_completeness;
    res.completeness.push_back(row);
  }
  std::set<std::pair<std::string, std::string>> excluded;
  for (const auto& row : res.completeness)
    if (row.excluded) excluded.insert({row.model, row.method});
  for (auto& rec : all_records)
    if (!excluded.count({rec.model, rec.method})) res.records.push_back(std::move(rec));
  std::stable_sort(res.records.begin(), res.records.end(), [](const auto& a, const auto& b) {
    return std::tie(a.replicate, a.model, a.method, a.noise_level, a.id) <
           std::tie(b.replicate, b.model, b.method, b.noise_level, b.id);
  });

  if (zero_norm_baselines > 0)
    res.warnings.push_back(std::to_string(zero_norm_baselines) + " record(s) dropped: zero-norm baseline counterfactual");
  for (const auto& m : cfg.models.names) {
    std::vector<double> lv, acc;
    for (const auto& a : res.accuracy)
      if (a.model == m) lv.push_back(a.level), acc.push_back(a.accuracy);
    const double rho = spearman(lv, acc);
    if (!(rho <= -0.5))
      res.warnings.push_back("accuracy of model '" + m + "' is not decreasing with noise level (Spearman rho = " +
                             csv::format(rho) + ")");
  }
  return res;
}

// ---------------------------------------------------------------------------
// Tables
// ---------------------------------------------------------------------------

struct TableOptions {
  std::vector<std::string> groups{"ALL", "TN", "FN"};
  std::size_t bootstrap = 2000;
  std::uint64_t seed = 0;
  McmcConfig mcmc{};
  int n_levels = 5;
};

inline TableOptions table_options(const ExperimentConfig& cfg) {
  return {cfg.groups, cfg.bootstrap, cfg.seed, cfg.mcmc, cfg.noise.n_levels};
}

namespace detail {

inline std::ofstream open_out(const std::filesystem::path& p) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw IoError("cannot write " + p.string());
  return out;
}

inline const std::vector<Bucket>& all_buckets() {
  static const std::vector<Bucket> b{Bucket::low, Bucket::medium, Bucket::high};
  return b;
}

inline bool in_group(Group wanted, Group actual) { return wanted == Group::all || wanted == actual; }

inline std::string nan_or(double v) { return std::isnan(v) ? "NaN" : csv::format(v); }

}  // namespace detail

/// Descriptive summaries per (group, combo, bucket). With several replicates
/// each statistic is the mean of the per-replicate values.
struct SummaryRow {
  std::string group;
  std::string combo;
  Bucket bucket;
  RobustnessSummary s;
  bool empty = true;
};

inline std::vector<SummaryRow> summarize_records(const std::vector<PairedDistanceRecord>& records,
                                                 const std::vector<std::string>& combos, const TableOptions& opt) {
  std::vector<int> levels;
  for (int l = 0; l < opt.n_levels; ++l) levels.push_back(l);
  const auto bucket_of = bucket_uncertainty(levels);
  std::set<int> replicates;
  for (const auto& r : records) replicates.insert(r.replicate);
  std::vector<SummaryRow> out;
  for (const auto& gname : opt.groups) {
    const auto g = group_from_string(gname);
    for (const auto& combo : combos) {
      for (auto b : detail::all_buckets()) {
        SummaryRow row{gname, combo, b, {}, true};
        std::vector<RobustnessSummary> per_rep;
        for (int rep : replicates) {
          std::vector<double> v;
          for (const auto& r : records)
            if (r.replicate == rep && combo_name(r.model, r.method) == combo && detail::in_group(g, r.group) &&
                bucket_of.at(r.noise_level) == b)
              v.push_back(r.relative_distance);
          if (v.empty()) continue;
          per_rep.push_back(summarize_values(
              v, opt.bootstrap, 0.05,
              stream_seed({opt.seed, fnv1a(gname + "/" + combo), static_cast<std::uint64_t>(b), static_cast<std::uint64_t>(rep)})));
        }
        if (!per_rep.empty()) {
          row.empty = false;
          const double k = static_cast<double>(per_rep.size());
          for (const auto& s : per_rep) {
            row.s.median += s.median / k;
            row.s.p10 += s.p10 / k;
            row.s.p90 += s.p90 / k;
            row.s.iqr += s.iqr / k;
            row.s.ci_low += s.ci_low / k;
            row.s.ci_high += s.ci_high / k;
            row.s.n += s.n;
          }
        }
        out.push_back(row);
      }
    }
  }
  return out;
}

struct ComparisonRow {
  std::string group;
  Bucket bucket;
  ComparisonResult result;
};

inline std::vector<ComparisonRow> compare_records(const std::vector<PairedDistanceRecord>& records, const TableOptions& opt,
                                                  std::vector<std::string>* warnings = nullptr) {
  std::vector<int> levels;
  for (int l = 0; l < opt.n_levels; ++l) levels.push_back(l);
  const auto bucket_of = bucket_uncertainty(levels);
  std::vector<ComparisonRow> out;
  for (const auto& gname : opt.groups) {
    const auto g = group_from_string(gname);
    for (auto b : detail::all_buckets()) {
      std::map<std::string, std::vector<PairedDistanceRecord>> by;
      for (const auto& r : records)
        if (detail::in_group(g, r.group) && bucket_of.at(r.noise_level) == b) by[combo_name(r.model, r.method)].push_back(r);
      if (by.empty()) continue;
      McmcOptions mo;
      mo.chains = opt.mcmc.chains;
      mo.draws = opt.mcmc.draws;
      mo.warmup = opt.mcmc.warmup;
      mo.seed = stream_seed({opt.seed, fnv1a(gname), static_cast<std::uint64_t>(b)});
      const auto set = compare_methods(by, mo);
      for (const auto& c : set.rows) {
        if (c.convergence_warning && warnings)
          warnings->push_back("posterior sampler did not converge for " + c.method + " (" + gname + ", " + to_string(b) + ")");
        out.push_back({gname, b, c});
      }
    }
  }
  return out;
}

/// Writes descriptive.csv, summary_long.csv, comparison.csv and
/// comparison_long.csv. Returns warnings raised while computing them.
inline std::vector<std::string> write_summary_tables(const std::vector<PairedDistanceRecord>& records,
                                                     const std::vector<std::string>& combos, const TableOptions& opt,
                                                     const std::filesystem::path& dir) {
  std::vector<std::string> warnings;
  const auto summaries = summarize_records(records, combos, opt);
  {
    auto out = detail::open_out(dir / "descriptive.csv");
    csv::Row h{"group", "method"};
    for (auto b : detail::all_buckets())
      for (const char* s : {"Median", "P10", "P90", "IQR"}) h.push_back(std::string(to_string(b)) + "_" + s);
    csv::write_row(out, h);
    for (std::size_t k = 0; k < summaries.size(); k += 3) {
      csv::Row row{summaries[k].group, summaries[k].combo};
      for (std::size_t b = 0; b < 3; ++b) {
        const auto& s = summaries[k + b];
        for (double v : {s.s.median, s.s.p10, s.s.p90, s.s.iqr}) row.push_back(s.empty ? "NaN" : csv::format(v));
      }
      csv::write_row(out, row);
    }
  }
  {
    auto out = detail::open_out(dir / "summary_long.csv");
    csv::write_row(out, {"group", "method", "bucket", "n", "median", "p10", "p90", "iqr", "ci_low", "ci_high"});
    for (const auto& s : summaries) {
      csv::Row row{s.group, s.combo, to_string(s.bucket), std::to_string(s.s.n)};
      for (double v : {s.s.median, s.s.p10, s.s.p90, s.s.iqr, s.s.ci_low, s.s.ci_high}) row.push_back(s.empty ? "NaN" : csv::format(v));
      csv::write_row(out, row);
    }
  }
  const auto comparisons = compare_records(records, opt, &warnings);
  {
    auto out = detail::open_out(dir / "comparison_long.csv");
    csv::write_row(out, {"group", "bucket", "method", "reference", "n_pairs", "median_delta", "p_value", "significance",
                         "effect_size", "posterior_p_best", "posterior_mcse"});
    for (const auto& c : comparisons) {
      const auto& r = c.result;
      csv::write_row(out, {c.group, to_string(c.bucket), r.method, r.reference, std::to_string(r.n_pairs),
                           detail::nan_or(r.median_delta), detail::nan_or(r.p_value), r.stars, detail::nan_or(r.effect_size),
                           detail::nan_or(r.posterior_p_best), detail::nan_or(r.posterior_mcse)});
    }
  }
  {
    auto out = detail::open_out(dir / "comparison.csv");
    csv::Row h{"group", "method"};
    for (auto b : detail::all_buckets())
      for (const char* s : {"MedianDelta", "PosteriorPBest", "Significance"}) h.push_back(std::string(to_string(b)) + "_" + s);
    csv::write_row(out, h);
    for (const auto& g : opt.groups) {
      for (const auto& combo : combos) {
        csv::Row row{g, combo};
        for (auto b : detail::all_buckets()) {
          const ComparisonResult* found = nullptr;
          for (const auto& c : comparisons)
            if (c.group == g && c.bucket == b && c.result.method == combo) found = &c.result;
          if (!found) {
            row.insert(row.end(), {"NaN", "NaN", ""});
          } else {
            row.push_back(detail::nan_or(found->median_delta));
            row.push_back(detail::nan_or(found->posterior_p_best));
            row.push_back(found->stars);
          }
        }
        csv::write_row(out, row);
      }
    }
  }
  return warnings;
}

inline std::string hex64(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i, v >>= 4) s[static_cast<std::size_t>(i)] = digits[v & 0xf];
  return s;
}

inline std::string config_hash(const ExperimentConfig& cfg) { return hex64(fnv1a(cfg.to_json().dump())); }

inline std::vector<std::string> included_combos(const SweepResult& res) {
  std::vector<std::string> out;
  for (const auto& c : res.completeness)
    if (!c.excluded) out.push_back(combo_name(c.model, c.method));
  return out;
}

/// Writes every artifact of a finished sweep into `dir` and returns the
/// manifest (also written as manifest.json). Timings go to timings.json so
/// that all other files depend only on the config and seeds.
inline nlohmann::json emit_tables(const SweepResult& res, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const auto& cfg = res.config;
  const auto opt = table_options(cfg);
  auto warnings = res.warnings;

  {
    // Accuracy averaged over replicates.
    std::map<std::pair<std::string, int>, std::vector<double>> acc;
    std::map<int, std::pair<double, double>> noise;
    for (const auto& a : res.accuracy) {
      acc[{a.model, a.level}].push_back(a.accuracy);
      noise[a.level] = {a.feature_sigma, a.label_flip_rate};
    }
    auto out = detail::open_out(dir / "accuracy.csv");
    csv::write_row(out, {"model", "noise_level", "feature_sigma", "label_flip_rate", "accuracy"});
    for (const auto& m : cfg.models.names)
      for (const auto& [lvl, nz] : noise)
        csv::write_row(out, {m, std::to_string(lvl), csv::format(nz.first), csv::format(nz.second), csv::format(mean(acc[{m, lvl}]))});
  }
  {
    auto out = detail::open_out(dir / "completeness.csv");
    csv::write_row(out, {"model", "method", "attempts", "valid", "completeness", "excluded"});
    for (const auto& c : res.completeness)
      csv::write_row(out, {c.model, c.method, std::to_string(c.attempts), std::to_string(c.valid), csv::format(c.completeness()),
                           c.excluded ? "true" : "false"});
  }
  std::vector<int> levels;
  for (int l = 0; l < cfg.noise.n_levels; ++l) levels.push_back(l);
  const auto bucket_of = bucket_uncertainty(levels);
  {
    auto out = detail::open_out(dir / "records.csv");
    csv::write_row(out, {"replicate", "model", "method", "noise_level", "bucket", "group", "id", "distance", "relative_distance"});
    for (const auto& r : res.records)
      csv::write_row(out, {std::to_string(r.replicate), r.model, r.method, std::to_string(r.noise_level),
                           to_string(bucket_of.at(r.noise_level)), to_string(r.group), std::to_string(r.id),
                           csv::format(r.distance), csv::format(r.relative_distance)});
  }
  {
    auto out = detail::open_out(dir / "ce_dump.csv");
    csv::Row h{"replicate", "model", "method", "noise_level", "id", "group", "valid", "cost", "evaluations", "reason"};
    for (const auto& c : res.base_columns) h.push_back("orig_" + c);
    for (const auto& c : res.base_columns) h.push_back("cf_" + c);
    csv::write_row(out, h);
    for (const auto& row : res.counterfactuals) {
      const auto& ce = row.ce;
      csv::Row r{std::to_string(row.replicate), row.model, row.method, std::to_string(row.level), std::to_string(ce.id),
                 to_string(row.group), ce.valid ? "1" : "0", csv::format(ce.cost), std::to_string(ce.evaluations), ce.reason};
      for (const Vector* v : {&ce.original, &ce.point}) {
        for (const auto& name : res.base_columns) {
          const auto it = std::find(row.columns.begin(), row.columns.end(), name);
          r.push_back(it == row.columns.end() ? "NaN" : csv::format((*v)[it - row.columns.begin()]));
        }
      }
      csv::write_row(out, r);
    }
  }
  const auto combos = included_combos(res);
  {
    // Median counterfactual cost against model accuracy per level.
    std::map<std::pair<std::string, int>, double> acc;
    std::map<std::pair<std::string, int>, std::size_t> cnt;
    for (const auto& a : res.accuracy) {
      acc[{a.model, a.level}] += a.accuracy;
      ++cnt[{a.model, a.level}];
    }
    auto out = detail::open_out(dir / "l1_vs_accuracy.csv");
    csv::write_row(out, {"group", "model", "method", "noise_level", "accuracy", "median_l1", "n"});
    for (const auto& gname : opt.groups) {
      const auto g = group_from_string(gname);
      for (const auto& c : res.completeness) {
        if (c.excluded) continue;
        for (int l = 0; l < cfg.noise.n_levels; ++l) {
          std::vector<double> costs;
          for (const auto& row : res.counterfactuals)
            if (row.model == c.model && row.method == c.method && row.level == l && row.ce.valid && detail::in_group(g, row.group))
              costs.push_back(row.ce.cost);
          const double a = acc[{c.model, l}] / static_cast<double>(std::max<std::size_t>(1, cnt[{c.model, l}]));
          csv::write_row(out, {gname, c.model, c.method, std::to_string(l), csv::format(a),
                               costs.empty() ? "NaN" : csv::format(median(costs)), std::to_string(costs.size())});
        }
      }
    }
  }
  for (auto& w : write_summary_tables(res.records, combos, opt, dir)) warnings.push_back(std::move(w));

  nlohmann::json m;
  m["version"] = kVersion;
  m["status"] = "ok";
  m["config_hash"] = config_hash(cfg);
  m["config"] = cfg.to_json();
  m["seeds"] = nlohmann::json::array();
  for (const auto& s : res.seeds)
    m["seeds"].push_back({{"replicate", s.replicate}, {"data", s.data}, {"noise", s.noise}, {"split", s.split},
                          {"model", s.model}, {"counterfactual", s.ce}});
  m["accuracy"] = nlohmann::json::array();
  for (const auto& a : res.accuracy)
    m["accuracy"].push_back({{"replicate", a.replicate}, {"model", a.model}, {"noise_level", a.level}, {"accuracy", a.accuracy}});
  m["exclusions"] = nlohmann::json::array();
  for (const auto& c : res.completeness)
    if (c.excluded)
      m["exclusions"].push_back({{"model", c.model},
                                 {"method", c.method},
                                 {"completeness", c.completeness()},
                                 {"min_completeness", cfg.min_completeness},
                                 {"reason", "completeness below threshold"}});
  m["counts"] = {{"counterfactuals", res.counterfactuals.size()}, {"records", res.records.size()}};
  m["comparison_priors"] = {{"mu", "Normal(0, 10 sd)"}, {"sigma", "HalfNormal(10 sd)"}, {"nu", "1 + Exponential(mean 29)"}};
  m["warnings"] = warnings;
  m["artifacts"] = {"accuracy.csv",   "completeness.csv",   "records.csv",         "ce_dump.csv",
                    "descriptive.csv", "summary_long.csv", "comparison.csv", "comparison_long.csv",
                    "l1_vs_accuracy.csv"};
  {
    auto out = detail::open_out(dir / "manifest.json");
    out << m.dump(2) << '\n';
  }
  {
    nlohmann::json t = nlohmann::json::object();
    for (const auto& [stage, secs] : res.timings) t[stage] = secs;
    auto out = detail::open_out(dir / "timings.json");
    out << t.dump(2) << '\n';
  }
  return m;
}

/// Run directory `<output_dir>/<name>-<UTC timestamp>`, suffixed when taken.
inline std::filesystem::path timestamped_run_dir(const ExperimentConfig& cfg) {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y%m%d-%H%M%S", &tm);
  std::filesystem::path p = std::filesystem::path(cfg.output_dir) / (cfg.name + "-" + buf);
  for (int k = 1; std::filesystem::exists(p); ++k) p = std::filesystem::path(cfg.output_dir) / (cfg.name + "-" + buf + "-" + std::to_string(k));
  return p;
}

/// run_sweep followed by emit_tables. On failure an error manifest naming the
/// stage is written before the exception propagates.
inline nlohmann::json run_experiment(const ExperimentConfig& cfg, const std::filesystem::path& dir) {
  try {
    const auto res = run_sweep(cfg);
    return emit_tables(res, dir);
  } catch (const std::exception& e) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    nlohmann::json m;
    m["version"] = kVersion;
    m["status"] = "error";
    m["config_hash"] = config_hash(cfg);
    const auto* se = dynamic_cast<const StageError*>(&e);
    m["error"] = {{"stage", se ? se->stage : std::string("emit")}, {"message", e.what()}};
    std::ofstream out(dir / "manifest.json");
    if (out) out << m.dump(2) << '\n';
    throw;
  }
}

/// Rebuilds the summary and comparison tables of an existing run directory
/// from records.csv, completeness.csv and the config stored in manifest.json.
inline void regenerate_tables(const std::filesystem::path& dir) {
  std::ifstream mf(dir / "manifest.json");
  if (!mf) throw IoError("no manifest.json in " + dir.string());
  const auto m = nlohmann::json::parse(mf);
  if (m.value("status", "") != "ok") throw DataError("run in " + dir.string() + " did not finish");
  const auto& c = m.at("config");
  TableOptions opt;
  opt.groups = c.at("experiment").at("groups").get<std::vector<std::string>>();
  opt.bootstrap = c.at("experiment").at("bootstrap").get<std::size_t>();
  opt.seed = c.at("experiment").at("seed").get<std::uint64_t>();
  opt.mcmc.chains = c.at("experiment").at("mcmc_chains").get<std::size_t>();
  opt.mcmc.draws = c.at("experiment").at("mcmc_draws").get<std::size_t>();
  opt.mcmc.warmup = c.at("experiment").at("mcmc_warmup").get<std::size_t>();
  opt.n_levels = c.at("noise").at("n_levels").get<int>();

  const auto comp = csv::read_file((dir / "completeness.csv").string());
  std::vector<std::string> combos;
  for (std::size_t i = 1; i < comp.size(); ++i)
    if (comp[i].at(5) == "false") combos.push_back(combo_name(comp[i].at(0), comp[i].at(1)));

  const auto rows = csv::read_file((dir / "records.csv").string());
  std::vector<PairedDistanceRecord> records;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& r = rows[i];
    if (r.size() != 9) throw DataError("records.csv: row " + std::to_string(i) + " has wrong width");
    PairedDistanceRecord rec;
    rec.replicate = std::stoi(r[0]);
    rec.model = r[1];
    rec.method = r[2];
    rec.noise_level = std::stoi(r[3]);
    rec.group = group_from_string(r[5]);
    rec.id = std::stoull(r[6]);
    rec.distance = *csv::parse_double(r[7]);
    rec.relative_distance = *csv::parse_double(r[8]);
    records.push_back(rec);
  }
  write_summary_tables(records, combos, opt, dir);
}

}  // namespace cfrobust
