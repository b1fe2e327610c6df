#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <json.hpp>

#include "metaid/error.hpp"
#include "metaid/eval.hpp"
#include "metaid/ingest.hpp"
#include "metaid/learn.hpp"
#include "metaid/model.hpp"
#include "metaid/parallel.hpp"
#include "metaid/privacy.hpp"
#include "metaid/scale.hpp"
#include "metaid/select.hpp"
#include "metaid/synth.hpp"

namespace metaid {

inline constexpr std::string_view kToolkitVersion = "0.1.0";

namespace cli {

using nlohmann::json;

// JSON config: top-level scalars and arrays set global flags, top-level
// objects set the flags of the subcommand with that name.
class JsonConfig : public CLI::Config {
 public:
  std::string to_config(const CLI::App*, bool, bool, std::string) const override { return "{}\n"; }

  std::vector<CLI::ConfigItem> from_config(std::istream& in) const override {
    json doc;
    try {
      doc = json::parse(in);
    } catch (const json::exception& e) {
      throw CLI::ConfigError(fmt::format("config is not valid JSON: {}", e.what()));
    }
    if (!doc.is_object()) throw CLI::ConfigError("config root must be a JSON object");
    std::vector<CLI::ConfigItem> items;
    for (const auto& [key, value] : doc.items()) {
      if (value.is_object()) {
        for (const auto& [k, v] : value.items()) items.push_back(item({key}, k, v));
      } else {
        items.push_back(item({}, key, value));
      }
    }
    return items;
  }

 private:
  static std::string scalar(const json& v) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_object() || v.is_null()) throw CLI::ConfigError("config values must be scalars or arrays");
    return v.dump();
  }

  static CLI::ConfigItem item(std::vector<std::string> parents, const std::string& name, const json& v) {
    CLI::ConfigItem it;
    it.parents = std::move(parents);
    it.name = name;
    if (v.is_array())
      for (const auto& e : v) it.inputs.push_back(scalar(e));
    else
      it.inputs.push_back(scalar(v));
    return it;
  }
};

struct Globals {
  std::uint64_t seed = 0;
  unsigned workers = 1;
  std::string out_dir = ".";
};

// Flags shared by the experiment subcommands.
struct ExperimentFlags {
  std::string data;
  std::string algo = "knn";
  std::string features = "friend_count,follower_count";
  std::size_t users = 10;
  std::size_t per_user = 200;
  std::size_t reps = 200;
  double split = 0.7;
  std::vector<std::size_t> top_k = {1, 5, 10};
  std::size_t k = 1;
  std::size_t trees = 10;
  double l2 = 1.0;
  double tol = 1e-4;
  std::size_t max_iter = 100;
  std::size_t lbfgs_memory = 10;
  bool standardize = false;

  HyperParams params(std::uint64_t seed) const {
    HyperParams p;
    p.algorithm = *parse_algorithm(algo);
    p.knn_k = k;
    p.rf_trees = trees;
    p.mlr_l2 = l2;
    p.mlr_tol = tol;
    p.mlr_max_iter = max_iter;
    p.lbfgs_memory = lbfgs_memory;
    p.standardize = standardize;
    p.seed = seed;
    validate_params(p);
    return p;
  }

  ExperimentConfig config(std::uint64_t seed) const {
    ExperimentConfig c;
    c.u = users;
    c.combination = parse_combination(features);
    c.per_user = per_user;
    c.repetitions = reps;
    c.split_ratio = split;
    c.params = params(seed);
    c.top_k = top_k;
    c.master_seed = seed;
    validate_config(c);
    return c;
  }
};

inline void add_data_flag(CLI::App* app, std::string& path) {
  app->add_option("--data", path, "Input JSON-lines records")->required();
}

inline void add_model_flags(CLI::App* app, ExperimentFlags& f) {
  app->add_option("--algo", f.algo, "Classifier")->check(CLI::IsMember({"knn", "rf", "mlr"}));
  app->add_option("--k", f.k, "kNN neighbours")->check(CLI::PositiveNumber);
  app->add_option("--trees", f.trees, "Random forest trees")->check(CLI::PositiveNumber);
  app->add_option("--l2", f.l2, "MLR L2 penalty")->check(CLI::NonNegativeNumber);
  app->add_option("--tol", f.tol, "MLR gradient tolerance (infinity norm)")->check(CLI::PositiveNumber);
  app->add_option("--max-iter", f.max_iter, "MLR iteration limit")->check(CLI::PositiveNumber);
  app->add_option("--lbfgs-memory", f.lbfgs_memory, "L-BFGS history length")->check(CLI::PositiveNumber);
  app->add_flag("--standardize", f.standardize, "z-score features with training statistics");
}

inline void add_experiment_flags(CLI::App* app, ExperimentFlags& f) {
  add_data_flag(app, f.data);
  add_model_flags(app, f);
  app->add_option("--features", f.features, "Feature combination, comma separated");
  app->add_option("--users", f.users, "Users per model (u)")->check(CLI::PositiveNumber);
  app->add_option("--per-user", f.per_user, "Records sampled per user")->check(CLI::Range(2, 1 << 30));
  app->add_option("--reps", f.reps, "Bootstrap repetitions")->check(CLI::PositiveNumber);
  app->add_option("--split", f.split, "Training share of each user's records")->check(CLI::Range(0.0, 1.0));
  app->add_option("--top-k", f.top_k, "Top-k accuracies to report")->delimiter(',');
}

inline json to_json(const ExperimentConfig& c) {
  return {{"u", c.u},
          {"n", c.n()},
          {"combination", join_combination(c.combination)},
          {"per_user", c.per_user},
          {"repetitions", c.repetitions},
          {"split_ratio", c.split_ratio},
          {"top_k", c.top_k},
          {"master_seed", c.master_seed},
          {"params", to_json(c.params)}};
}

inline json to_json(const PopulationSpec& s) {
  return {{"users", s.users},
          {"tweets_per_user", s.tweets_per_user},
          {"separability", s.separability},
          {"epoch_start", format_instant(s.epoch_start)},
          {"epoch_end", format_instant(s.epoch_end)},
          {"counter_walk_step", s.counter_walk_step},
          {"geo_prob", s.geo_prob},
          {"verified_prob", s.verified_prob},
          {"noise_sigma", s.noise_sigma},
          {"hour_concentration", s.hour_concentration},
          {"collection_days", s.collection_days},
          {"seed", s.seed}};
}

inline json to_json(const ObfuscationSchedule& s) {
  json cols = json::array();
  for (auto f : s.columns) cols.push_back(std::string(feature_name(f)));
  return {{"mechanism", std::string(mechanism_name(s.mechanism))},
          {"columns", cols},
          {"fractions", s.fractions},
          {"bins", s.bins},
          {"bin_mode", s.bin_mode == BinMode::quantile ? "quantile" : "equal_width"},
          {"seed", s.seed}};
}

class Runner {
 public:
  Runner(const Globals& g, std::string config_path, std::ostream& out, std::ostream& err)
      : g_(g), config_path_(std::move(config_path)), out_(out), err_(err) {}

  std::filesystem::path out_path(const std::string& name) const { return std::filesystem::path(g_.out_dir) / name; }

  void prepare() const {
    std::error_code ec;
    std::filesystem::create_directories(g_.out_dir, ec);
    if (ec) throw IoError(fmt::format("cannot create output directory {}: {}", g_.out_dir, ec.message()));
  }

  template <typename Fn>
  void write_file(const std::filesystem::path& path, Fn&& fn) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError(fmt::format("cannot open {} for writing", path.string()));
    fn(f);
    f.flush();
    if (!f) throw IoError(fmt::format("failed writing {}", path.string()));
    outputs_.push_back(path.filename().string());
  }

  void manifest(const std::string& command, json resolved) {
    json m = {{"toolkit_version", std::string(kToolkitVersion)},
              {"command", command},
              {"config_file", config_path_},
              {"master_seed", g_.seed},
              {"output_dir", g_.out_dir},
              {"outputs", outputs_},
              {"resolved", std::move(resolved)}};
    const auto path = out_path(command + ".manifest.json");
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError(fmt::format("cannot open {} for writing", path.string()));
    f << m.dump(2) << '\n';
    out_ << "wrote " << path.string() << '\n';
  }

  Dataset load(const std::string& path) const {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError(fmt::format("cannot open {}", path));
    auto parsed = parse_records(in);
    if (!parsed.rejected.empty())
      err_ << fmt::format("warning: {} malformed line(s) skipped in {}\n", parsed.rejected.size(), path);
    return std::move(parsed.data);
  }

  void warn_convergence(const MetricsReport& r) const {
    if (r.convergence_warnings)
      err_ << fmt::format("warning: {} of {} repetitions stopped before MLR convergence\n", r.convergence_warnings,
                          r.repetitions);
  }

  const Globals& globals() const noexcept { return g_; }
  std::ostream& out() const noexcept { return out_; }

 private:
  Globals g_;
  std::string config_path_;
  std::ostream& out_;
  std::ostream& err_;
  std::vector<std::string> outputs_;
};

inline std::vector<double> fractions_or_default(const std::vector<double>& f) {
  return f.empty() ? default_fractions() : f;
}

}  // namespace cli

// Runs one CLI invocation. `args` excludes the program name. Returns 0 on
// success, 1 on a module error, 2 on a usage error.
inline int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  using namespace cli;
  CLI::App app{"Metadata-based account identification toolkit", "metaid"};
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1);
  app.config_formatter(std::make_shared<JsonConfig>());
  app.allow_config_extras(CLI::config_extras_mode::error);
  app.set_version_flag("--version", std::string(kToolkitVersion));

  Globals g;
  app.add_option("--seed", g.seed, "Master seed");
  app.add_option("--workers", g.workers, "Worker thread cap")->check(CLI::PositiveNumber);
  app.add_option("--out-dir", g.out_dir, "Output directory");
  auto* config_opt = app.set_config("--config", "", "JSON config file (flags override it)");

  auto sub = [&](const char* name, const char* help) {
    auto* s = app.add_subcommand(name, help);
    s->fallthrough();
    return s;
  };

  // generate
  PopulationSpec spec;
  std::string gen_output, epoch_start = "2006-03-21T00:00:00Z", epoch_end = "2015-10-01T00:00:00Z";
  auto* gen = sub("generate", "Generate a synthetic population as JSON lines");
  gen->add_option("--users", spec.users, "Number of users")->check(CLI::PositiveNumber);
  gen->add_option("--tweets", spec.tweets_per_user, "Tweets per user")->check(CLI::PositiveNumber);
  gen->add_option("--sep", spec.separability, "Separability of user counter means")->check(CLI::NonNegativeNumber);
  gen->add_option("--walk-step", spec.counter_walk_step, "Counter random-walk step")->check(CLI::NonNegativeNumber);
  gen->add_option("--geo-prob", spec.geo_prob, "P(geo_enabled)")->check(CLI::Range(0.0, 1.0));
  gen->add_option("--verified-prob", spec.verified_prob, "P(verified)")->check(CLI::Range(0.0, 1.0));
  gen->add_option("--noise-sigma", spec.noise_sigma, "Intra-user counter noise")->check(CLI::NonNegativeNumber);
  gen->add_option("--hour-concentration", spec.hour_concentration, "Dirichlet concentration of posting hours")
      ->check(CLI::PositiveNumber);
  gen->add_option("--collection-days", spec.collection_days, "Length of the posting window in days")
      ->check(CLI::PositiveNumber);
  gen->add_option("--epoch-start", epoch_start, "Earliest account creation time");
  gen->add_option("--epoch-end", epoch_end, "Latest account creation time and start of posting");
  gen->add_option("-o,--output", gen_output, "Output file (default <out-dir>/population.jsonl)");

  // ingest
  std::string ing_data, ing_output;
  std::size_t min_tweets = kDefaultMinTweets;
  double max_malformed = 0.01;
  auto* ing = sub("ingest", "Validate records and keep users with enough tweets");
  add_data_flag(ing, ing_data);
  ing->add_option("--min-tweets", min_tweets, "Minimum tweets per kept user")->check(CLI::PositiveNumber);
  ing->add_option("--max-malformed", max_malformed, "Tolerated share of malformed lines")->check(CLI::Range(0.0, 1.0));
  ing->add_option("-o,--output", ing_output, "Output file (default <out-dir>/ingested.jsonl)");

  // entropy
  std::string ent_data;
  auto* ent = sub("entropy", "Per-feature empirical entropy");
  add_data_flag(ent, ent_data);

  // identify
  ExperimentFlags id_flags;
  auto* ident = sub("identify", "Bootstrap identification experiment");
  add_experiment_flags(ident, id_flags);

  // sweep-features
  ExperimentFlags sf_flags;
  std::vector<std::size_t> levels = {1, 2, 3};
  std::string candidates;
  auto* sf = sub("sweep-features", "Exhaustive wrapper search over feature combinations");
  add_experiment_flags(sf, sf_flags);
  sf->add_option("--levels", levels, "Combination sizes to evaluate")->delimiter(',');
  sf->add_option("--candidates", candidates, "Feature pool, comma separated (default all 14)");

  // sweep-users
  ExperimentFlags su_flags;
  su_flags.per_user = 10;
  std::vector<std::size_t> u_values = {10, 100, 1000};
  auto* su = sub("sweep-users", "Accuracy as a function of the number of users");
  add_experiment_flags(su, su_flags);
  su->add_option("--u-values", u_values, "Numbers of users")->delimiter(',');

  // obfuscate
  ExperimentFlags ob_flags;
  std::string mechanism = "rounding_randomization", columns;
  std::vector<double> fractions = default_fractions();
  std::size_t bins = 10;
  bool equal_width = false;
  auto* ob = sub("obfuscate", "Accuracy under obfuscated training data");
  add_experiment_flags(ob, ob_flags);
  ob->add_option("--mechanism", mechanism, "Obfuscation mechanism")
      ->check(CLI::IsMember({"rounding_randomization", "anonymization_binning"}));
  ob->add_option("--columns", columns, "Columns to perturb (default every feature in use)");
  ob->add_option("--fractions", fractions, "Perturbed shares of training rows")->delimiter(',');
  ob->add_option("--bins", bins, "Categories for binning")->check(CLI::PositiveNumber);
  ob->add_flag("--equal-width", equal_width, "Equal-width instead of quantile bins");

  // partition-bench
  ExperimentFlags pb_flags;
  pb_flags.users = 1000;
  pb_flags.per_user = 20;
  pb_flags.features = "friend_count,follower_count,listed_count";
  std::vector<std::size_t> subset_sizes = {100, 250, 500, 1000};
  std::size_t per_subset = 1;
  auto* pb = sub("partition-bench", "Partitioned against monolithic classification");
  add_data_flag(pb, pb_flags.data);
  add_model_flags(pb, pb_flags);
  pb->add_option("--features", pb_flags.features, "Feature combination, comma separated");
  pb->add_option("--users", pb_flags.users, "Users per model (u)")->check(CLI::PositiveNumber);
  pb->add_option("--per-user", pb_flags.per_user, "Records sampled per user")->check(CLI::Range(2, 1 << 30));
  pb->add_option("--split", pb_flags.split, "Training share of each user's records")->check(CLI::Range(0.0, 1.0));
  pb->add_option("--subset-sizes", subset_sizes, "Classes per stage-1 subset")->delimiter(',');
  pb->add_option("--candidates-per-subset", per_subset, "Stage-1 nominations per subset")
      ->check(CLI::PositiveNumber);

  // benchmark
  ExperimentFlags bm_flags;
  bm_flags.per_user = 20;
  std::vector<std::string> algos = {"knn", "rf", "mlr"};
  std::vector<std::size_t> bm_u = {100, 1000}, bm_n = {3};
  std::string bm_features = "friend_count,follower_count,listed_count,favourites_count,statuses_count";
  std::size_t runs = 3;
  auto* bm = sub("benchmark", "Training and prediction wall-clock time");
  add_data_flag(bm, bm_flags.data);
  add_model_flags(bm, bm_flags);
  bm->add_option("--algos", algos, "Classifiers to time")->delimiter(',')->check(CLI::IsMember({"knn", "rf", "mlr"}));
  bm->add_option("--u-values", bm_u, "Numbers of users")->delimiter(',');
  bm->add_option("--n-values", bm_n, "Numbers of features (prefixes of --features)")->delimiter(',');
  bm->add_option("--features", bm_features, "Ordered feature list");
  bm->add_option("--per-user", bm_flags.per_user, "Records sampled per user")->check(CLI::Range(2, 1 << 30));
  bm->add_option("--split", bm_flags.split, "Training share of each user's records")->check(CLI::Range(0.0, 1.0));
  bm->add_option("--runs", runs, "Timed runs per cell (median reported)")->check(CLI::Range(3, 1000));

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    err << "usage: " << e.what() << '\n';
    return 2;
  }

  const std::string config_path = config_opt->count() ? config_opt->as<std::string>() : std::string{};
  Runner run(g, config_path, out, err);
  const unsigned previous_workers = worker_count();
  set_worker_count(g.workers);

  try {
    run.prepare();
    const auto seed = g.seed;
    if (gen->parsed()) {
      const auto s = parse_instant(epoch_start);
      const auto e = parse_instant(epoch_end);
      if (!s) throw ValidationError("epoch_start", fmt::format("'{}' is not YYYY-MM-DDThh:mm:ssZ", epoch_start));
      if (!e) throw ValidationError("epoch_end", fmt::format("'{}' is not YYYY-MM-DDThh:mm:ssZ", epoch_end));
      spec.epoch_start = *s;
      spec.epoch_end = *e;
      spec.seed = seed;
      const auto data = generate_population(spec);
      const auto path = gen_output.empty() ? run.out_path("population.jsonl") : std::filesystem::path(gen_output);
      run.write_file(path, [&](std::ostream& f) { write_records(f, data); });
      out << fmt::format("generated {} records for {} users\n", data.size(), data.user_count());
      run.manifest("generate", {{"population", to_json(spec)}, {"output", path.string()}});
    } else if (ing->parsed()) {
      std::ifstream in(ing_data, std::ios::binary);
      if (!in) throw IoError(fmt::format("cannot open {}", ing_data));
      const auto parsed = parse_records(in, ParseOptions{max_malformed});
      const auto kept = filter_min_tweets(parsed.data, min_tweets);
      const auto path = ing_output.empty() ? run.out_path("ingested.jsonl") : std::filesystem::path(ing_output);
      run.write_file(path, [&](std::ostream& f) { write_records(f, kept); });
      run.write_file(run.out_path("rejections.csv"), [&](std::ostream& f) { write_rejections_csv(f, parsed.rejected); });
      run.write_file(run.out_path("ingest_summary.csv"), [&](std::ostream& f) {
        CsvWriter csv(f, {"lines", "records", "rejected", "users_kept", "records_kept"});
        csv.row(parsed.lines, parsed.data.size(), parsed.rejected.size(), kept.user_count(), kept.size());
      });
      run.manifest("ingest", {{"min_tweets", min_tweets}, {"max_malformed_fraction", max_malformed},
                              {"input", ing_data}, {"output", path.string()}});
    } else if (ent->parsed()) {
      const auto data = run.load(ent_data);
      run.write_file(run.out_path("entropy.csv"), [&](std::ostream& f) { write_entropy_csv(f, entropy_table(data)); });
      run.manifest("entropy", {{"input", ent_data}});
    } else if (ident->parsed()) {
      const auto config = id_flags.config(seed);
      const auto data = run.load(id_flags.data);
      const auto report = bootstrap_run(data, config);
      run.warn_convergence(report);
      run.write_file(run.out_path("report.csv"), [&](std::ostream& f) {
        ReportCsv csv(f);
        csv.add("identify", config, report);
      });
      run.manifest("identify", {{"experiment", to_json(config)}, {"input", id_flags.data}});
    } else if (sf->parsed()) {
      const auto config = sf_flags.config(seed);
      const auto data = run.load(sf_flags.data);
      WrapperOptions opt;
      opt.levels = levels;
      if (!candidates.empty()) opt.features = parse_combination(candidates);
      const auto scores = wrapper_search(data, config.params, opt, config);
      run.write_file(run.out_path("ranking.csv"), [&](std::ostream& f) { write_ranking_csv(f, scores); });
      out << fmt::format("evaluated {} combinations\n", scores.size());
      run.manifest("sweep-features", {{"experiment", to_json(config)},
                                      {"levels", levels},
                                      {"candidates", join_combination(opt.features)},
                                      {"input", sf_flags.data}});
    } else if (su->parsed()) {
      const auto config = su_flags.config(seed);
      const auto data = run.load(su_flags.data);
      const auto sweep = scaling_sweep(data, config, u_values);
      run.write_file(run.out_path("report.csv"), [&](std::ostream& f) {
        ReportCsv csv(f);
        for (const auto& [u, report] : sweep) {
          auto c = config;
          c.u = u;
          run.warn_convergence(report);
          csv.add(fmt::format("sweep-users-u{}", u), c, report);
        }
      });
      run.manifest("sweep-users", {{"experiment", to_json(config)}, {"u_values", u_values}, {"input", su_flags.data}});
    } else if (ob->parsed()) {
      const auto config = ob_flags.config(seed);
      const auto data = run.load(ob_flags.data);
      ObfuscationSchedule schedule;
      schedule.mechanism = *parse_mechanism(mechanism);
      if (!columns.empty()) schedule.columns = parse_combination(columns);
      schedule.fractions = fractions_or_default(fractions);
      schedule.bins = bins;
      schedule.bin_mode = equal_width ? BinMode::equal_width : BinMode::quantile;
      schedule.seed = derive_seed(seed, {1});
      const auto points = obfuscation_sweep(data, config, schedule);
      run.write_file(run.out_path("sweep.csv"),
                     [&](std::ostream& f) { write_sweep_csv(f, schedule.mechanism, config, points); });
      run.manifest("obfuscate", {{"experiment", to_json(config)}, {"schedule", to_json(schedule)}, {"input", ob_flags.data}});
    } else if (pb->parsed()) {
      PartitionBenchConfig c;
      c.u = pb_flags.users;
      c.per_user = pb_flags.per_user;
      c.split_ratio = pb_flags.split;
      c.combination = parse_combination(pb_flags.features);
      c.params = pb_flags.params(seed);
      c.subset_sizes = subset_sizes;
      c.candidates_per_subset = per_subset;
      c.seed = seed;
      const auto data = run.load(pb_flags.data);
      const auto rows = partition_benchmark(data, c);
      run.write_file(run.out_path("partition_bench.csv"), [&](std::ostream& f) { write_timing_csv(f, rows); });
      run.manifest("partition-bench", {{"u", c.u},
                                       {"per_user", c.per_user},
                                       {"split_ratio", c.split_ratio},
                                       {"combination", join_combination(c.combination)},
                                       {"params", to_json(c.params)},
                                       {"subset_sizes", c.subset_sizes},
                                       {"candidates_per_subset", c.candidates_per_subset},
                                       {"input", pb_flags.data}});
    } else if (bm->parsed()) {
      TimingGrid grid;
      grid.algorithms.clear();
      for (const auto& a : algos) grid.algorithms.push_back(*parse_algorithm(a));
      grid.u_values = bm_u;
      grid.n_values = bm_n;
      grid.features = parse_combination(bm_features);
      grid.per_user = bm_flags.per_user;
      grid.split_ratio = bm_flags.split;
      grid.runs = runs;
      grid.params = bm_flags.params(seed);
      grid.seed = seed;
      const auto data = run.load(bm_flags.data);
      const auto rows = timing_benchmark(data, grid);
      for (const auto& r : rows)
        if (r.unstable)
          err << fmt::format("warning: timing of {} at u={} n={} varied by more than 20% across runs\n",
                             algorithm_name(r.algorithm), r.u, r.n);
      run.write_file(run.out_path("timing.csv"), [&](std::ostream& f) { write_timing_csv(f, rows); });
      run.manifest("benchmark", {{"algorithms", algos},
                                 {"u_values", bm_u},
                                 {"n_values", bm_n},
                                 {"features", join_combination(grid.features)},
                                 {"per_user", grid.per_user},
                                 {"runs", runs},
                                 {"params", to_json(grid.params)},
                                 {"input", bm_flags.data}});
    }
  } catch (const Error& e) {
    set_worker_count(previous_workers);
    err << "error: " << e.kind() << ": " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    set_worker_count(previous_workers);
    err << "error: internal: " << e.what() << '\n';
    return 1;
  }
  set_worker_count(previous_workers);
  return 0;
}

}  // namespace metaid
