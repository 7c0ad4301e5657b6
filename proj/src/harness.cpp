#include "odcal/harness.hpp"

#include "odcal/csv.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include <json.hpp>

namespace odcal {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

constexpr const char* kVersion = "odcal 0.1.0";

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::uint64_t config_hash(const fs::path& scenario_path, const ScenarioConfig& cfg) {
  std::string bytes = read_text(scenario_path);
  bytes.append(reinterpret_cast<const char*>(cfg.demand_profile.mean.data()),
               static_cast<std::size_t>(cfg.demand_profile.mean.size()) * sizeof(double));
  return fnv1a64(bytes);
}

json manifest_base(const std::string& command, const fs::path& scenario_path, const ScenarioConfig& cfg) {
  json j;
  j["version"] = kVersion;
  j["command"] = command;
  j["scenario"] = scenario_path.filename().string();
  j["scenario_name"] = cfg.name;
  j["config_hash"] = hex64(config_hash(scenario_path, cfg));
  return j;
}

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

MatrixXd median_of(const std::vector<MatrixXd>& mats) {
  if (mats.empty()) return {};
  MatrixXd out(mats.front().rows(), mats.front().cols());
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    for (Eigen::Index c = 0; c < out.cols(); ++c) {
      std::vector<double> v;
      for (const auto& m : mats) v.push_back(m(r, c));
      out(r, c) = median(std::move(v));
    }
  }
  return out;
}

void write_mse_csv(const fs::path& path, const MseTable& t, const std::string& first_col) {
  std::ostringstream out;
  out << first_col;
  for (const auto& c : t.columns) out << "," << c;
  out << "\n";
  for (std::size_t r = 0; r < t.locations.size(); ++r) {
    out << t.locations[r];
    for (Eigen::Index c = 0; c < t.median.cols(); ++c) out << "," << fmt6(t.median(static_cast<Eigen::Index>(r), c));
    out << "\n";
  }
  write_text(path, out.str());
}

void write_mse_per_seed(const fs::path& path, const MseTable& t) {
  std::ostringstream out;
  out << "seed,location,column,mse\n";
  for (std::size_t s = 0; s < t.seeds.size(); ++s) {
    for (std::size_t r = 0; r < t.locations.size(); ++r) {
      for (std::size_t c = 0; c < t.columns.size(); ++c) {
        out << t.seeds[s] << "," << t.locations[r] << "," << t.columns[c] << ","
            << fmt6(t.per_seed[s](static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c))) << "\n";
      }
    }
  }
  write_text(path, out.str());
}

std::string delta_label(double d) {
  std::ostringstream s;
  s << d;
  return s.str();
}

}  // namespace

const std::array<ModelVariant, 4>& model_variants() {
  static const std::array<ModelVariant, 4> v{{{"I", true, true},
                                              {"II", true, false},
                                              {"III", false, true},
                                              {"IV", false, false}}};
  return v;
}

std::vector<std::string> od_names(const ScenarioConfig& cfg) {
  std::vector<std::string> names;
  for (const auto& p : cfg.od_pairs) names.push_back(p.origin + "-" + p.destination);
  return names;
}

void save_trained(const fs::path& dir, const TrainedModel& model) {
  fs::create_directories(dir);
  std::ostringstream p;
  write_params(p, model.params);
  write_text(dir / "predictor.txt", p.str());
  std::ostringstream n;
  write_normalizer(n, model.normalizer);
  write_text(dir / "normalizer.csv", n.str());
  write_text(dir / "metamodel.json", metamodel_to_json(model.metamodel) + "\n");
}

TrainedModel load_trained(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw ParseError("params directory not found: " + dir.string());
  TrainedModel m;
  std::istringstream p(read_text(dir / "predictor.txt"));
  m.params = read_params(p);
  std::istringstream n(read_text(dir / "normalizer.csv"));
  m.normalizer = read_normalizer(n);
  m.metamodel = metamodel_from_json(read_text(dir / "metamodel.json"));
  return m;
}

VectorXd location_mse(const RunLog& log, int from_interval) {
  const Eigen::Index k = static_cast<Eigen::Index>(log.detector_ids.size());
  VectorXd sum = VectorXd::Zero(k);
  int n = 0;
  for (const auto& r : log.records) {
    if (r.interval < from_interval) continue;
    sum += (r.simulated - r.observed).array().square().matrix();
    ++n;
  }
  return n ? VectorXd(sum / n) : sum;
}

std::vector<int> peak_intervals(const DemandProfile& profile, double fraction) {
  const VectorXd total = profile.mean.rowwise().sum();
  const double top = total.size() ? total.maxCoeff() : 0.0;
  std::vector<int> out;
  for (Eigen::Index t = 0; t < total.size(); ++t) {
    if (top > 0 && total[t] >= fraction * top) out.push_back(static_cast<int>(t));
  }
  return out;
}

double mean_loss_f(const RunLog& log, const std::vector<int>& intervals) {
  double sum = 0.0;
  int n = 0;
  for (const auto& r : log.records) {
    if (std::binary_search(intervals.begin(), intervals.end(), r.interval)) {
      sum += r.loss_f;
      ++n;
    }
  }
  return n ? sum / n : 0.0;
}

int adaptation_interval(const RunLog& log, int onset, int window, int baseline) {
  std::vector<double> before;
  for (const auto& r : log.records) {
    if (r.interval < onset && r.interval >= onset - baseline) before.push_back(r.loss_f);
  }
  if (before.empty()) return -1;
  const double threshold = median(before);
  double rolling = 0.0;
  std::vector<double> recent;
  for (const auto& r : log.records) {
    if (r.interval < onset) continue;
    recent.push_back(r.loss_f);
    rolling += r.loss_f;
    if (static_cast<int>(recent.size()) > window) rolling -= recent[recent.size() - 1 - window];
    const auto n = std::min<std::size_t>(recent.size(), static_cast<std::size_t>(window));
    if (static_cast<int>(n) == window && rolling / n < threshold) return r.interval;
  }
  return -1;
}

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers = std::max<std::size_t>(1, std::min<std::size_t>(n, std::thread::hardware_concurrency()));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(n);
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

// ---- generate ----

Dataset generate_dataset(const ScenarioConfig& cfg, int days, std::uint64_t seed) {
  const SimPlant plant = build_plant(cfg);
  Dataset ds;
  for (int d = 0; d < days; ++d) ds.day_seeds.push_back(derive_seed(seed, static_cast<std::uint64_t>(d)));
  ds.days.resize(static_cast<std::size_t>(days));
  parallel_for(ds.days.size(), [&](std::size_t d) {
    ds.days[d] = run_day(plant, sampled_demand(cfg.demand_profile), {}, cfg.horizon, ds.day_seeds[d]);
  });
  return ds;
}

void cmd_generate(const fs::path& scenario, int days, std::uint64_t seed, const fs::path& out) {
  if (days < 0) throw ValidationError("generate: --days must be >= 0");
  const ScenarioConfig cfg = load_scenario(scenario);
  if (days == 0) std::cerr << "warning: --days 0 writes an empty dataset\n";
  if (!cfg.incidents.empty()) {
    std::cerr << "note: scenario incidents are ignored; pre-training days are incident-free\n";
  }
  const Dataset ds = generate_dataset(cfg, days, seed);
  fs::create_directories(out);
  json j = manifest_base("generate", scenario, cfg);
  j["seed"] = seed;
  j["days"] = days;
  j["day_seeds"] = ds.day_seeds;
  j["horizon"] = cfg.horizon;
  j["interval_s"] = cfg.interval_s;
  json files = json::array();
  for (int d = 0; d < days; ++d) {
    char stem[32];
    std::snprintf(stem, sizeof stem, "day_%03d", d);
    const auto& day = ds.days[static_cast<std::size_t>(d)];
    write_series_csv(out / (std::string(stem) + "_measurements.csv"), day);
    write_demand_csv(out / (std::string(stem) + "_demand.csv"), day.true_demand, od_names(cfg));
    files.push_back({{"measurements", std::string(stem) + "_measurements.csv"},
                     {"demand", std::string(stem) + "_demand.csv"}});
  }
  j["files"] = files;
  write_text(out / "manifest.json", j.dump(2) + "\n");
}

std::vector<Day> load_dataset(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw ParseError("dataset directory not found: " + dir.string());
  json j;
  try {
    j = json::parse(read_text(dir / "manifest.json"));
  } catch (const json::exception& e) {
    throw ParseError(std::string("dataset manifest: ") + e.what());
  }
  std::vector<Day> days;
  for (const auto& f : j.at("files")) {
    days.push_back(read_series(dir / f.at("measurements").get<std::string>(),
                               dir / f.at("demand").get<std::string>()));
  }
  return days;
}

// ---- pretrain ----

PretrainReport train_model(const std::vector<Day>& days, const ScenarioConfig& cfg, int epochs,
                           std::uint64_t seed, bool time_simulator_epoch) {
  if (days.empty()) throw ValidationError("pretrain: dataset has no days");
  PretrainReport rep;
  Metamodel mm = metamodel_from_scenario(cfg, 1.0);
  mm.c = fit_metamodel_c(mm, days);
  rep.result = pretrain(days, mm, cfg, epochs, seed);
  rep.model = {rep.result.params, rep.result.normalizer, mm};
  if (!rep.result.epoch_seconds.empty()) {
    double s = 0.0;
    for (double e : rep.result.epoch_seconds) s += e;
    rep.metamodel_epoch_s = s / static_cast<double>(rep.result.epoch_seconds.size());
  }
  if (time_simulator_epoch) {
    const SimPlant plant = build_plant(cfg);
    const auto started = std::chrono::steady_clock::now();
    simulator_in_loop_epoch(rep.model.params, make_encoder(cfg, rep.model.normalizer), mm, days, plant,
                            cfg, derive_seed(seed, 55));
    rep.simulator_epoch_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  }
  return rep;
}

PretrainReport cmd_pretrain(const fs::path& dataset, const fs::path& scenario, int epochs,
                            const fs::path& out) {
  const ScenarioConfig cfg = load_scenario(scenario);
  const std::vector<Day> days = load_dataset(dataset);
  const int n_epochs = epochs >= 0 ? epochs : cfg.hyper.pretrain_epochs;
  const std::uint64_t seed = derive_seed(cfg.seed, 31);
  PretrainReport rep = train_model(days, cfg, n_epochs, seed);
  save_trained(out, rep.model);

  std::ostringstream curve;
  curve << "epoch,loss\n";
  for (std::size_t e = 0; e < rep.result.epoch_loss.size(); ++e) {
    curve << e + 1 << "," << fmt6(rep.result.epoch_loss[e]) << "\n";
  }
  write_text(out / "loss_curve.csv", curve.str());

  json j = manifest_base("pretrain", scenario, cfg);
  j["dataset"] = dataset.filename().string();
  j["dataset_days"] = days.size();
  j["epochs"] = n_epochs;
  j["seed"] = seed;
  j["fitted_c"] = rep.model.metamodel.c;
  j["sizes"] = rep.model.params.sizes();
  write_text(out / "manifest.json", j.dump(2) + "\n");

  // Wall-clock is machine dependent, so it lives outside the reproducible files.
  json t;
  t["epoch_seconds"] = rep.result.epoch_seconds;
  t["metamodel_epoch_s"] = rep.metamodel_epoch_s;
  t["simulator_in_loop_epoch_s"] = rep.simulator_epoch_s;
  t["speedup"] = rep.metamodel_epoch_s > 0 ? rep.simulator_epoch_s / rep.metamodel_epoch_s : 0.0;
  write_text(out / "timing.json", t.dump(2) + "\n");
  return rep;
}

// ---- compare ----

std::vector<std::uint64_t> default_seeds(const ScenarioConfig& cfg, int replications) {
  std::vector<std::uint64_t> seeds;
  for (int r = 0; r < replications; ++r) seeds.push_back(cfg.seed + 1 + static_cast<std::uint64_t>(r));
  return seeds;
}

namespace {

struct Prepared {
  SimPlant plant;
  FeatureEncoder encoder;
  std::vector<MeasurementSeries> truths;
};

Prepared prepare(const ScenarioConfig& cfg, const TrainedModel& model, const std::vector<std::uint64_t>& seeds) {
  if (seeds.empty()) throw ValidationError("at least one seed is required");
  Prepared p{build_plant(cfg), make_encoder(cfg, model.normalizer), {}};
  p.truths.resize(seeds.size());
  parallel_for(seeds.size(), [&](std::size_t s) {
    p.truths[s] = run_day(p.plant, sampled_demand(cfg.demand_profile), cfg.incidents, cfg.horizon,
                          truth_seed(seeds[s]));
  });
  return p;
}

RunLog run_variant(const ScenarioConfig& cfg, const Prepared& prep, const TrainedModel& model,
                   const PredictorParams& start, bool update, double delta, const MeasurementSeries& truth,
                   std::uint64_t seed) {
  MlpPredictor predictor(start, prep.encoder, cfg.hyper.demand_clip_max, cfg.hyper.learning_rate);
  OnlineOptions opt;
  opt.mode = update ? OnlineMode::update : OnlineMode::frozen;
  opt.delta = delta;
  opt.steps_per_interval = cfg.hyper.online_steps_per_interval;
  opt.sim_seed = twin_seed(seed);
  return run_online(predictor, model.metamodel, truth, prep.plant, cfg, opt);
}

std::uint64_t finetune_seed(const ScenarioConfig& cfg) { return derive_seed(cfg.seed, 4242); }

}  // namespace

CompareResult run_compare(const ScenarioConfig& cfg, const TrainedModel& model,
                          const std::vector<std::uint64_t>& seeds) {
  const Prepared prep = prepare(cfg, model, seeds);
  const ScenarioConfig typical = without_incidents(cfg);
  const PredictorParams tuned = finetune_typical_day(model.params, prep.encoder, model.metamodel, prep.plant,
                                                     typical, finetune_seed(cfg), cfg.hyper.learning_rate);
  const auto& variants = model_variants();

  CompareResult res;
  res.logs.assign(seeds.size(), std::vector<RunLog>(variants.size()));
  parallel_for(seeds.size() * variants.size(), [&](std::size_t job) {
    const std::size_t s = job / variants.size();
    const std::size_t v = job % variants.size();
    const PredictorParams& start = variants[v].uses_finetune ? tuned : model.params;
    res.logs[s][v] = run_variant(cfg, prep, model, start, variants[v].online_update, cfg.hyper.delta,
                                 prep.truths[s], seeds[s]);
  });

  res.peak = peak_intervals(cfg.demand_profile);
  res.mse.seeds = seeds;
  for (const auto& d : cfg.detectors) res.mse.locations.push_back(d.id);
  for (const auto& v : variants) res.mse.columns.push_back(v.id);
  res.peak_loss.resize(static_cast<Eigen::Index>(seeds.size()), static_cast<Eigen::Index>(variants.size()));
  for (std::size_t s = 0; s < seeds.size(); ++s) {
    MatrixXd m(cfg.num_detectors(), static_cast<Eigen::Index>(variants.size()));
    for (std::size_t v = 0; v < variants.size(); ++v) {
      m.col(static_cast<Eigen::Index>(v)) = location_mse(res.logs[s][v]);
      res.peak_loss(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(v)) =
          mean_loss_f(res.logs[s][v], res.peak);
    }
    res.mse.per_seed.push_back(std::move(m));
  }
  res.mse.median = median_of(res.mse.per_seed);
  return res;
}

CompareResult cmd_compare(const fs::path& scenario, const fs::path& params,
                          const std::vector<std::uint64_t>& seeds, const fs::path& out) {
  const ScenarioConfig cfg = load_scenario(scenario);
  const TrainedModel model = load_trained(params);
  CompareResult res = run_compare(cfg, model, seeds);
  const auto names = od_names(cfg);
  const auto& variants = model_variants();

  fs::create_directories(out);
  json runs = json::array();
  for (std::size_t s = 0; s < seeds.size(); ++s) {
    for (std::size_t v = 0; v < variants.size(); ++v) {
      const std::string name = "model" + variants[v].id + "_seed" + std::to_string(seeds[s]);
      write_runlog_csv(out / "runs" / name / "log.csv", res.logs[s][v], names);
      write_trace_csv(out / "runs" / name / "trace.csv", res.logs[s][v]);
      runs.push_back({{"run", name},
                      {"variant", variants[v].id},
                      {"seed", seeds[s]},
                      {"truth_hash", hex64(res.logs[s][v].truth_hash)}});
    }
  }
  write_mse_csv(out / "mse_table.csv", res.mse, "location");
  write_mse_per_seed(out / "mse_per_seed.csv", res.mse);

  std::ostringstream peak;
  peak << "seed";
  for (const auto& v : variants) peak << ",model" << v.id;
  peak << "\n";
  for (std::size_t s = 0; s < seeds.size(); ++s) {
    peak << seeds[s];
    for (Eigen::Index v = 0; v < res.peak_loss.cols(); ++v) peak << "," << fmt6(res.peak_loss(static_cast<Eigen::Index>(s), v));
    peak << "\n";
  }
  write_text(out / "peak_loss.csv", peak.str());

  std::ostringstream order;
  order << "location,ordering\n";
  for (std::size_t r = 0; r < res.mse.locations.size(); ++r) {
    std::vector<std::size_t> idx(variants.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
      return res.mse.median(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(a)) <
             res.mse.median(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(b));
    });
    order << res.mse.locations[r] << ",";
    for (std::size_t i = 0; i < idx.size(); ++i) order << (i ? " < " : "") << variants[idx[i]].id;
    order << "\n";
  }
  write_text(out / "ordering.csv", order.str());

  json j = manifest_base("compare", scenario, cfg);
  j["params"] = params.filename().string();
  j["seeds"] = seeds;
  j["replications"] = seeds.size();
  j["finetune_seed"] = finetune_seed(cfg);
  j["fitted_c"] = model.metamodel.c;
  j["runs"] = runs;
  write_text(out / "manifest.json", j.dump(2) + "\n");
  return res;
}

// ---- sensitivity ----

SensitivityResult run_sensitivity(const ScenarioConfig& cfg, const TrainedModel& model,
                                  const std::vector<double>& deltas,
                                  const std::vector<std::uint64_t>& seeds) {
  if (deltas.empty()) throw ValidationError("sensitivity: no delta values");
  for (double d : deltas) {
    if (!(d >= 0)) throw ValidationError("sensitivity: delta must be >= 0");
  }
  const Prepared prep = prepare(cfg, model, seeds);
  const int onset = cfg.incidents.empty() ? 0 : cfg.incidents.front().start_interval;

  std::vector<PredictorParams> tuned(deltas.size());
  parallel_for(deltas.size(), [&](std::size_t i) {
    ScenarioConfig typical = without_incidents(cfg);
    typical.hyper.delta = deltas[i];
    tuned[i] = finetune_typical_day(model.params, prep.encoder, model.metamodel, prep.plant, typical,
                                    finetune_seed(cfg), cfg.hyper.learning_rate);
  });

  SensitivityResult res;
  res.deltas = deltas;
  res.logs.assign(seeds.size(), std::vector<RunLog>(deltas.size()));
  parallel_for(seeds.size() * deltas.size(), [&](std::size_t job) {
    const std::size_t s = job / deltas.size();
    const std::size_t i = job % deltas.size();
    res.logs[s][i] = run_variant(cfg, prep, model, tuned[i], true, deltas[i], prep.truths[s], seeds[s]);
  });

  res.adaptation.resize(static_cast<Eigen::Index>(seeds.size()), static_cast<Eigen::Index>(deltas.size()));
  for (auto* t : {&res.full, &res.post}) {
    t->seeds = seeds;
    for (const auto& d : cfg.detectors) t->locations.push_back(d.id);
    for (double d : deltas) t->columns.push_back("delta=" + delta_label(d));
  }
  // Never adapted: score what follows the incident, or from onset if the incident runs to the end.
  int after_incident = cfg.incidents.empty() ? 0 : cfg.incidents.front().end_interval + 1;
  if (after_incident >= cfg.horizon - 1) after_incident = onset;
  for (std::size_t s = 0; s < seeds.size(); ++s) {
    MatrixXd full(cfg.num_detectors(), static_cast<Eigen::Index>(deltas.size()));
    MatrixXd post(cfg.num_detectors(), static_cast<Eigen::Index>(deltas.size()));
    for (std::size_t i = 0; i < deltas.size(); ++i) {
      const RunLog& log = res.logs[s][i];
      const int adapted = adaptation_interval(log, onset);
      res.adaptation(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(i)) = adapted;
      full.col(static_cast<Eigen::Index>(i)) = location_mse(log);
      post.col(static_cast<Eigen::Index>(i)) = location_mse(log, adapted >= 0 ? adapted : after_incident);
    }
    res.full.per_seed.push_back(std::move(full));
    res.post.per_seed.push_back(std::move(post));
  }
  res.full.median = median_of(res.full.per_seed);
  res.post.median = median_of(res.post.per_seed);
  return res;
}

SensitivityResult cmd_sensitivity(const fs::path& scenario, const fs::path& params,
                                  const std::vector<double>& deltas,
                                  const std::vector<std::uint64_t>& seeds, const fs::path& out) {
  const ScenarioConfig cfg = load_scenario(scenario);
  const TrainedModel model = load_trained(params);
  SensitivityResult res = run_sensitivity(cfg, model, deltas, seeds);
  const auto names = od_names(cfg);

  fs::create_directories(out);
  json runs = json::array();
  for (std::size_t s = 0; s < seeds.size(); ++s) {
    for (std::size_t i = 0; i < deltas.size(); ++i) {
      const std::string name = "delta" + delta_label(deltas[i]) + "_seed" + std::to_string(seeds[s]);
      write_runlog_csv(out / "runs" / name / "log.csv", res.logs[s][i], names);
      write_trace_csv(out / "runs" / name / "trace.csv", res.logs[s][i]);
      runs.push_back({{"run", name}, {"delta", deltas[i]}, {"seed", seeds[s]},
                      {"truth_hash", hex64(res.logs[s][i].truth_hash)}});
    }
  }
  write_mse_csv(out / "sensitivity_mse.csv", res.full, "location");
  write_mse_csv(out / "sensitivity_post_adaptation_mse.csv", res.post, "location");

  std::ostringstream a;
  a << "seed,delta,adaptation_interval\n";
  for (std::size_t s = 0; s < seeds.size(); ++s) {
    for (std::size_t i = 0; i < deltas.size(); ++i) {
      a << seeds[s] << "," << delta_label(deltas[i]) << ","
        << res.adaptation(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(i)) << "\n";
    }
  }
  write_text(out / "adaptation.csv", a.str());

  json j = manifest_base("sensitivity", scenario, cfg);
  j["params"] = params.filename().string();
  j["deltas"] = deltas;
  j["seeds"] = seeds;
  j["finetune_seed"] = finetune_seed(cfg);
  j["runs"] = runs;
  write_text(out / "manifest.json", j.dump(2) + "\n");
  return res;
}

// ---- export ----

void cmd_export(const fs::path& runs, const fs::path& out) {
  fs::path root = runs;
  if (fs::is_directory(runs / "runs")) root = runs / "runs";
  if (!fs::is_directory(root)) throw ParseError("runs directory not found: " + runs.string());
  std::vector<fs::path> dirs;
  for (const auto& e : fs::directory_iterator(root)) {
    if (e.is_directory() && fs::exists(e.path() / "log.csv")) dirs.push_back(e.path());
  }
  if (dirs.empty()) throw ParseError("no run logs under " + root.string());
  std::sort(dirs.begin(), dirs.end());

  std::ostringstream loss, density, scatter, traces;
  loss << "run,interval,L_f,L_d,total\n";
  density << "run,interval,location,series,density_vpkm\n";
  scatter << "run,interval,od,predicted_vph,true_vph\n";
  traces << "run,interval,param,value\n";

  for (const auto& dir : dirs) {
    const std::string run = dir.filename().string();
    const CsvTable log = read_csv(dir / "log.csv");
    std::vector<std::pair<std::string, int>> obs, sim, pred, truth;
    for (std::size_t c = 0; c < log.header.size(); ++c) {
      const std::string& h = log.header[c];
      const int ci = static_cast<int>(c);
      if (h.rfind("f_obs_", 0) == 0) obs.emplace_back(h.substr(6), ci);
      else if (h.rfind("f_sim_", 0) == 0) sim.emplace_back(h.substr(6), ci);
      else if (h.rfind("D_pred_", 0) == 0) pred.emplace_back(h.substr(7), ci);
      else if (h.rfind("D_true_", 0) == 0) truth.emplace_back(h.substr(7), ci);
    }
    const int c_int = log.column("interval");
    const int c_lf = log.column("L_f"), c_ld = log.column("L_d"), c_tot = log.column("total");
    if (c_int < 0 || c_lf < 0 || c_ld < 0 || c_tot < 0) throw ParseError(run + ": log.csv missing loss columns");
    for (const auto& row : log.rows) {
      const std::string& t = row[c_int];
      loss << run << "," << t << "," << row[c_lf] << "," << row[c_ld] << "," << row[c_tot] << "\n";
      for (std::size_t d = 0; d < sim.size(); ++d) {
        density << run << "," << t << "," << sim[d].first << ",simulated," << row[sim[d].second] << "\n";
        density << run << "," << t << "," << obs[d].first << ",truth," << row[obs[d].second] << "\n";
      }
      for (std::size_t l = 0; l < pred.size(); ++l) {
        scatter << run << "," << t << "," << pred[l].first << "," << row[pred[l].second] << ","
                << (l < truth.size() ? row[truth[l].second] : std::string()) << "\n";
      }
    }
    if (fs::exists(dir / "trace.csv")) {
      const CsvTable tr = read_csv(dir / "trace.csv");
      for (const auto& row : tr.rows) {
        for (std::size_t c = 1; c < tr.header.size(); ++c) {
          traces << run << "," << row[0] << "," << tr.header[c] << "," << row[c] << "\n";
        }
      }
    }
  }
  write_text(out / "loss_over_time.csv", loss.str());
  write_text(out / "density_over_time.csv", density.str());
  write_text(out / "demand_scatter.csv", scatter.str());
  write_text(out / "parameter_traces.csv", traces.str());
}

}  // namespace odcal
