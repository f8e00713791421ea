#include "cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "hypox/analysis.hpp"
#include "hypox/csv.hpp"
#include "hypox/embedded_tables.hpp"
#include "hypox/metrics.hpp"
#include "hypox/scoring.hpp"

namespace hypox::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// ---------------------------------------------------------------- config

template <typename T>
T get(const json& v, const std::string& key) {
  try {
    return v.get<T>();
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Config, key + ": " + e.what());
  }
}

pipeline::FilterConfig filter_from_json(const json& j, pipeline::FilterConfig f) {
  if (!j.is_object()) throw Error(ErrorKind::Config, "filter must be an object");
  for (const auto& [key, v] : j.items()) {
    if (key == "row_missing_drop_fraction") {
      f.row_missing_drop_fraction = get<double>(v, "filter." + key);
    } else if (key == "admission_min_present") {
      f.admission_min_present = get<double>(v, "filter." + key);
    } else if (key == "max_gap_minutes") {
      f.max_gap_minutes = get<Minute>(v, "filter." + key);
    } else if (key == "min_rows") {
      f.min_rows = get<std::size_t>(v, "filter." + key);
    } else {
      throw Error(ErrorKind::Config, "unknown filter key '" + key + "'");
    }
  }
  return f;
}

json filter_to_json(const pipeline::FilterConfig& f) {
  return {{"row_missing_drop_fraction", f.row_missing_drop_fraction},
          {"admission_min_present", f.admission_min_present},
          {"max_gap_minutes", f.max_gap_minutes},
          {"min_rows", f.min_rows}};
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

// ------------------------------------------------------------- utilities

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::MissingInput, "cannot write '" + path.string() + "'");
  out << j.dump(2) << '\n';
}

json read_json(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::MissingInput, "cannot open '" + path.string() + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::Schema, path.string() + ": " + e.what());
  }
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorKind::MissingInput, "cannot create '" + dir.string() + "': " + ec.message());
}

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidInput:
    case ErrorKind::MissingInput:
    case ErrorKind::Schema:
    case ErrorKind::Config:
    case ErrorKind::UnsupportedPopulation:
      return kInputError;
    default:
      return kStageFailure;
  }
}

// Wraps a stage so errors carry its name and map onto exit codes.
struct StageError : std::runtime_error {
  StageError(std::string stage, const Error& e)
      : std::runtime_error(e.what()), stage(std::move(stage)), kind(e.kind()) {}
  std::string stage;
  ErrorKind kind;
};

template <typename Fn>
int stage(const std::string& name, Fn&& fn) {
  try {
    return fn();
  } catch (const Error& e) {
    throw StageError(name, e);
  }
}

struct Context {
  RunConfig config;
  std::ostream& out;
  std::ostream& err;
  std::optional<scoring::ScoringMatrix> loaded;

  const scoring::ScoringMatrix& matrix() {
    if (!config.tag_csv && !config.threshold_csv) return scoring::ScoringMatrix::builtin();
    if (!loaded) {
      auto slurp = [](const std::string& p) {
        std::ifstream in(p, std::ios::binary);
        if (!in) throw Error(ErrorKind::MissingInput, "cannot open '" + p + "'");
        std::ostringstream ss;
        ss << in.rdbuf();
        return ss.str();
      };
      const std::string tags = config.tag_csv ? slurp(*config.tag_csv) : std::string(scoring::embedded::kTagCsv);
      const std::string thr =
          config.threshold_csv ? slurp(*config.threshold_csv) : std::string(scoring::embedded::kThresholdCsv);
      loaded = scoring::ScoringMatrix::from_csv(tags, thr);
    }
    return *loaded;
  }
};

// --------------------------------------------------------------- stages

int cmd_synth(Context& ctx, const fs::path& out_path) {
  return stage("synth", [&] {
    const auto records = synth::generate(ctx.config.synth, ctx.config.seed);
    synth::write_raw_csv(out_path.string(), records, ctx.config.provenance());
    ctx.out << "synth: " << records.size() << " rows -> " << out_path.string() << '\n';
    return int{kOk};
  });
}

// TAG scores and severity labels per raw row, plus alarm runs per admission.
int cmd_score(Context& ctx, const fs::path& in_path, const fs::path& out_path, const fs::path& alarms_path) {
  return stage("score", [&] {
    const auto& m = ctx.matrix();
    const auto table = csv::Table::read_file(in_path.string());
    const auto records = pipeline::parse_raw_csv(table);
    json row_errors = json::array();

    std::vector<std::array<std::optional<int>, kVitalCount>> tags(records.size());
    std::vector<std::optional<int>> labels(records.size());
    const SanitizeRanges plausible;
    for (std::size_t i = 0; i < records.size(); ++i) {
      const auto& v = records[i].values;
      const double age = v[idx(Column::Age)], copd = v[idx(Column::Copd)];
      if (std::isnan(age)) continue;  // nothing can be scored without an age band
      try {
        if (age < 18 && !std::isnan(copd) && copd != 0.0) {
          throw Error(ErrorKind::UnsupportedPopulation, "pediatric COPD is outside the scoring tables");
        }
        const auto band = scoring::age_band(age);
        // Implausible readings stay unscored, as sanitize would clear them.
        for (auto k : kAllVitals) {
          const double x = v[idx(column_of(k))];
          if (plausible[k].contains(x)) tags[i][static_cast<std::size_t>(k)] = m.tag_score(k, x, band);
        }
        const double spo2 = v[idx(Column::SpO2)];
        if (!std::isnan(copd) && plausible[VitalKind::SpO2].contains(spo2)) {
          labels[i] = m.severity_label(spo2, scoring::classify_population(age, copd != 0.0));
        }
      } catch (const Error& e) {
        row_errors.push_back({{"line", table.line_of(i)}, {"hadm_id", records[i].hadm_id}, {"error", e.what()}});
      }
    }

    std::ofstream out(out_path, std::ios::binary);
    if (!out) throw Error(ErrorKind::MissingInput, "cannot write '" + out_path.string() + "'");
    out << "# " << ctx.config.provenance() << '\n';
    auto header = table.header();
    for (auto k : kAllVitals) header.push_back("TAG_" + std::string(vital_name(k)));
    header.emplace_back("severity_label");
    csv::write_row(out, header);
    for (std::size_t i = 0; i < records.size(); ++i) {
      auto fields = table.row(i);
      for (const auto& t : tags[i]) fields.push_back(t ? std::to_string(*t) : "");
      fields.push_back(labels[i] ? std::to_string(*labels[i]) : "");
      csv::write_row(out, fields);
    }

    // Alarm state holds the latest charted score until the next charting.
    json admissions = json::array();
    for (const auto& group : pipeline::group_by_admission(records)) {
      std::map<Minute, std::size_t> latest;  // charttime -> last record index
      for (std::size_t i = 0; i < records.size(); ++i) {
        if (records[i].hadm_id == group.front().hadm_id) latest[records[i].charttime] = i;
      }
      const Minute first = latest.begin()->first, last = latest.rbegin()->first;
      json alarms = json::array();
      for (auto k : kAllVitals) {
        std::vector<scoring::TagScore> series(static_cast<std::size_t>(last - first + 1), 0);
        auto it = latest.begin();
        scoring::TagScore held = 0;
        for (Minute t = first; t <= last; ++t) {
          if (it != latest.end() && it->first == t) {
            held = tags[it->second][static_cast<std::size_t>(k)].value_or(0);
            ++it;
          }
          series[static_cast<std::size_t>(t - first)] = held;
        }
        for (const auto& run : scoring::alarm_runs(series, k, first)) {
          alarms.push_back({{"vital", vital_name(k)},
                            {"start", format_charttime(run.start_minute)},
                            {"duration_minutes", run.duration_minutes},
                            {"score", run.score}});
        }
      }
      admissions.push_back({{"subject_id", group.front().subject_id},
                            {"hadm_id", group.front().hadm_id},
                            {"alarms", alarms}});
    }
    if (!alarms_path.empty()) {
      write_json(alarms_path, {{"provenance", ctx.config.provenance_json()},
                               {"admissions", admissions},
                               {"row_errors", row_errors}});
    }
    for (const auto& e : row_errors) {
      ctx.err << "score: line " << e["line"].get<std::size_t>() << ": " << e["error"].get<std::string>() << '\n';
    }
    ctx.out << "score: " << records.size() << " rows, " << row_errors.size() << " row errors -> "
            << out_path.string() << '\n';
    return row_errors.empty() ? int{kOk} : int{kPartialFailure};
  });
}

int cmd_preprocess(Context& ctx, const fs::path& in_path, const fs::path& out_path, const fs::path& report_path) {
  return stage("preprocess", [&] {
    const auto records = pipeline::read_raw_csv(in_path.string());
    const auto groups = pipeline::group_by_admission(records);
    std::vector<pipeline::PipelineReport> reports(groups.size());
    std::vector<std::vector<AdmissionSeries>> kept(groups.size());
    pipeline::parallel_for(groups.size(), ctx.config.jobs, [&](std::size_t i) {
      auto& rep = reports[i];
      auto s = pipeline::merge_same_charttime(groups[i]);
      rep.stages.push_back({"merge_charttimes", groups[i].size(), s.size(), 1, 1, 0});
      const auto cleared = pipeline::sanitize(s);
      rep.stages.push_back({"sanitize", s.size(), s.size(), 1, 1, cleared});
      kept[i] = pipeline::filter_admissions({std::move(s)}, rep, ctx.config.filter);
    });
    pipeline::PipelineReport report;
    std::vector<MaskedFrame> frames;
    for (std::size_t i = 0; i < groups.size(); ++i) {
      report.merge(reports[i]);
      for (const auto& s : kept[i]) frames.push_back(as_frame(s));
    }
    const auto features = pipeline::feature_columns();
    for (const auto& f : frames) {
      for (const auto& r : f.rows) {
        for (auto c : features) report.missing_cells += std::isnan(r[idx(c)]) ? 1 : 0;
        report.feature_cells += features.size();
      }
    }
    write_frames_csv(out_path.string(), frames, ctx.config.provenance());
    auto j = report.to_json();
    j["provenance"] = ctx.config.provenance_json();
    write_json(report_path, j);
    ctx.out << "preprocess: " << groups.size() << " admissions in, " << frames.size() << " kept -> "
            << out_path.string() << '\n';
    if (frames.empty()) throw Error(ErrorKind::InsufficientData, "no admission passed the inclusion filters");
    return int{kOk};
  });
}

std::vector<int> labels_of(const AdmissionSeries& s, const scoring::ScoringMatrix& m) {
  std::vector<int> out;
  for (const auto& r : s.rows) {
    const double age = r[idx(Column::Age)], copd = r[idx(Column::Copd)], spo2 = r[idx(Column::SpO2)];
    if (std::isnan(age) || std::isnan(copd) || std::isnan(spo2)) continue;
    if (age < 18 && copd != 0.0) continue;  // no threshold table for this population
    out.push_back(m.severity_label(spo2, scoring::classify_population(age, copd != 0.0)));
  }
  return out;
}

// MICE, derived columns, minute-grid interpolation, post-sanitize, rounding.
int cmd_impute(Context& ctx, const fs::path& in_path, const fs::path& out_path, const fs::path& report_path) {
  return stage("impute", [&] {
    const auto& m = ctx.matrix();
    const auto filtered = read_frames_csv(in_path.string());
    std::vector<AdmissionSeries> series;
    for (const auto& f : filtered) series.push_back(static_cast<const AdmissionSeries&>(f));
    auto audit = impute::impute_admissions(series, ctx.config.impute);

    pipeline::PipelineReport report;
    std::vector<int> before;
    std::size_t knot_rows = 0;
    for (auto& s : series) {
      knot_rows += s.size();
      pipeline::add_derived_columns(s);
      const auto l = labels_of(s, m);
      before.insert(before.end(), l.begin(), l.end());
    }
    std::vector<MaskedFrame> frames(series.size());
    std::vector<std::size_t> cleared(series.size());
    pipeline::parallel_for(series.size(), ctx.config.jobs, [&](std::size_t i) {
      frames[i] = pipeline::interpolate_minutes(series[i]);
      cleared[i] = pipeline::sanitize(frames[i]);
      pipeline::round_values(frames[i]);
    });
    std::vector<int> after;
    std::size_t rows = 0, total_cleared = 0;
    // Label runs never span admissions; lengths are pooled before averaging.
    std::map<int, std::vector<std::size_t>> run_lengths;
    for (std::size_t i = 0; i < frames.size(); ++i) {
      const auto l = labels_of(frames[i], m);
      after.insert(after.end(), l.begin(), l.end());
      rows += frames[i].size();
      total_cleared += cleared[i];
      for (std::size_t a = 0; a < l.size();) {
        std::size_t b = a;
        while (b < l.size() && l[b] == l[a]) ++b;
        run_lengths[l[a]].push_back(b - a);
        a = b;
      }
    }
    for (auto& [label, lengths] : run_lengths) {
      pipeline::DurationStats d;
      d.runs = lengths.size();
      double sum = 0;
      for (auto x : lengths) sum += static_cast<double>(x);
      d.mean = sum / static_cast<double>(lengths.size());
      std::sort(lengths.begin(), lengths.end());
      const auto mid = lengths.size() / 2;
      d.median = lengths.size() % 2 ? static_cast<double>(lengths[mid])
                                    : 0.5 * static_cast<double>(lengths[mid - 1] + lengths[mid]);
      report.label_durations[label] = d;
    }
    report.labels_before_interpolation = pipeline::label_distribution(before);
    report.labels_after_interpolation = pipeline::label_distribution(after);
    report.stages.push_back({"interpolate", knot_rows, rows, frames.size(), frames.size(), total_cleared});

    write_frames_csv(out_path.string(), frames, ctx.config.provenance());
    auto j = report.to_json();
    j["imputation"] = audit;
    j["provenance"] = ctx.config.provenance_json();
    write_json(report_path, j);
    ctx.out << "impute: " << frames.size() << " admissions, " << rows << " minute rows -> " << out_path.string()
            << '\n';
    return int{kOk};
  });
}

int cmd_dataset(Context& ctx, const fs::path& in_path, const fs::path& out_dir) {
  return stage("dataset", [&] {
    ensure_dir(out_dir);
    const auto frames = read_frames_csv(in_path.string());
    const auto& cfg = ctx.config.dataset;
    const auto d = dataset::build_dataset(frames, cfg, ctx.config.seed, ctx.config.jobs, ctx.matrix());
    const auto prov = ctx.config.provenance();
    for (std::size_t s = 0; s < 3; ++s) {
      const std::string name(dataset::split_name(static_cast<dataset::Split>(s)));
      dataset::write_gbm_csv((out_dir / (name + ".csv")).string(), d.rows[s], prov);
      if (cfg.export_sequences) {
        dataset::write_sequence_csv((out_dir / ("sequences_" + name + ".csv")).string(), d.admissions[s], cfg, prov);
      }
    }
    auto manifest = d.manifest(cfg);
    manifest["provenance"] = ctx.config.provenance_json();
    write_json(out_dir / "manifest.json", manifest);
    for (const auto& [hadm, why] : d.excluded) ctx.err << "dataset: excluded admission " << hadm << ": " << why << '\n';
    ctx.out << "dataset: " << d.rows[0].y.size() << "/" << d.rows[1].y.size() << "/" << d.rows[2].y.size()
            << " train/validation/test rows -> " << out_dir.string() << '\n';
    return int{kOk};
  });
}

int cmd_train(Context& ctx, const fs::path& data_dir, const fs::path& model_path, const fs::path& log_path,
              const fs::path& importance_path) {
  return stage("train", [&] {
    const auto train = dataset::read_gbm_csv((data_dir / "train.csv").string());
    const auto valid = dataset::read_gbm_csv((data_dir / "validation.csv").string());
    std::vector<double> wt, wv;
    json weights = nullptr;
    if (ctx.config.class_weights) {
      const auto w = dataset::class_weights(train.y);
      weights = w;
      for (int y : train.y) wt.push_back(w[static_cast<std::size_t>(y)]);
      for (int y : valid.y) wv.push_back(w[static_cast<std::size_t>(y)]);
    }
    auto model = valid.y.empty()
                     ? gbdt::fit_classifier(train.x, train.y, wt, ctx.config.gbdt)
                     : gbdt::fit_classifier(train.x, train.y, wt, ctx.config.gbdt, valid.x, valid.y, wv);
    model.set_feature_names(dataset::feature_names());
    {
      std::ofstream out(model_path, std::ios::binary);
      if (!out) throw Error(ErrorKind::MissingInput, "cannot write '" + model_path.string() + "'");
      out << json{{"provenance", ctx.config.provenance_json()}, {"class_weights", weights}, {"model", model.to_json()}}
                 .dump()
          << '\n';
    }
    {
      std::ofstream out(log_path, std::ios::binary);
      if (!out) throw Error(ErrorKind::MissingInput, "cannot write '" + log_path.string() + "'");
      out << "# " << ctx.config.provenance() << '\n';
      csv::write_row(out, {"round", "train_log_loss", "validation_log_loss"});
      for (const auto& h : model.history()) {
        csv::write_row(out, {std::to_string(h.round), csv::format_double(h.train),
                             h.validation ? csv::format_double(*h.validation) : std::string()});
      }
    }
    json imp = json::array();
    for (const auto& g : gbdt::top_k(gbdt::feature_importance(model), ctx.config.top_features)) {
      imp.push_back({{"feature", g.name}, {"gain", g.gain}});
    }
    write_json(importance_path, {{"provenance", ctx.config.provenance_json()},
                                 {"best_round", model.best_round()},
                                 {"rounds_trained", model.rounds_trained()},
                                 {"top_features", imp}});
    ctx.out << "train: best round " << model.best_round() << " of " << model.rounds_trained() << " -> "
            << model_path.string() << '\n';
    return int{kOk};
  });
}

gbdt::GbdtModel load_model(const fs::path& path) {
  const auto j = read_json(path);
  if (!j.is_object() || !j.contains("model")) throw Error(ErrorKind::Schema, path.string() + ": not a model file");
  try {
    return gbdt::GbdtModel::from_json(j.at("model"));
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Schema, path.string() + ": " + e.what());
  }
}

int cmd_evaluate(Context& ctx, const fs::path& model_path, const fs::path& data_path, const fs::path& report_path,
                 const fs::path& csv_path) {
  return stage("evaluate", [&] {
    const auto model = load_model(model_path);
    const auto data = dataset::read_gbm_csv(data_path.string());
    if (data.x.cols() != model.n_features()) throw Error(ErrorKind::Schema, "feature count differs from the model");
    if (data.y.empty()) throw Error(ErrorKind::InsufficientData, "no rows to evaluate");
    Matrix scores(data.x.rows(), kNumClasses);
    std::vector<int> pred(data.x.rows());
    for (std::size_t r = 0; r < data.x.rows(); ++r) {
      const auto p = gbdt::predict_proba(model, data.x.row(r));
      std::copy(p.begin(), p.end(), scores.row(r).begin());
      pred[r] = gbdt::argmax_severe(p);
    }
    const auto rep = metrics::report(metrics::confusion(data.y, pred), data.y, scores);
    auto j = rep.to_json();
    j["provenance"] = ctx.config.provenance_json();
    write_json(report_path, j);
    if (!csv_path.empty()) {
      std::ofstream out(csv_path, std::ios::binary);
      if (!out) throw Error(ErrorKind::MissingInput, "cannot write '" + csv_path.string() + "'");
      out << "# " << ctx.config.provenance() << '\n';
      csv::write_row(out, metrics::ClassificationReport::csv_header());
      csv::write_row(out, rep.csv_row("gbdt"));
    }
    ctx.out << "evaluate: accuracy " << metrics::round4(rep.accuracy) << ", macro-F1 " << metrics::round4(rep.macro_f1)
            << ", MCC " << metrics::round4(rep.mcc) << " -> " << report_path.string() << '\n';
    return int{kOk};
  });
}

int cmd_analyze(Context& ctx, const fs::path& in_path, const fs::path& out_dir) {
  return stage("analyze", [&] {
    ensure_dir(out_dir);
    const auto frames = read_frames_csv(in_path.string());
    std::vector<std::size_t> cols;
    for (const auto& name : ctx.config.analysis_features) {
      const auto c = parse_column(name);
      if (!c) throw Error(ErrorKind::Config, "unknown analysis feature '" + name + "'");
      cols.push_back(idx(*c));
    }
    Matrix x;
    std::vector<double> buf(cols.size());
    for (const auto& f : frames) {
      for (const auto& r : f.rows) {
        for (std::size_t i = 0; i < cols.size(); ++i) buf[i] = r[cols[i]];
        x.append_row(buf);
      }
    }
    const auto prov = ctx.config.provenance();
    const auto corr = analysis::correlation_matrix(x, ctx.config.analysis_features);
    corr.write_csv((out_dir / "correlation.csv").string(), prov);
    auto cj = corr.to_json();
    cj["provenance"] = ctx.config.provenance_json();
    write_json(out_dir / "correlation.json", cj);
    const auto p = analysis::pca(x, ctx.config.analysis_features, true);
    p.write_csv((out_dir / "pca.csv").string(), prov);
    auto pj = p.to_json();
    pj["provenance"] = ctx.config.provenance_json();
    write_json(out_dir / "pca.json", pj);
    ctx.out << "analyze: " << x.rows() << " rows, first component explains "
            << metrics::round4(p.explained_ratio.front()) << " -> " << out_dir.string() << '\n';
    return int{kOk};
  });
}

int cmd_run(Context& ctx, const fs::path& out_dir, std::string input) {
  ensure_dir(out_dir);
  if (input.empty()) {
    input = (out_dir / "raw.csv").string();
    cmd_synth(ctx, input);
  }
  int code = cmd_score(ctx, input, out_dir / "scored.csv", out_dir / "alarms.json");
  cmd_preprocess(ctx, input, out_dir / "filtered.csv", out_dir / "preprocess_report.json");
  cmd_impute(ctx, out_dir / "filtered.csv", out_dir / "frames.csv", out_dir / "impute_report.json");
  cmd_dataset(ctx, out_dir / "frames.csv", out_dir / "dataset");
  cmd_train(ctx, out_dir / "dataset", out_dir / "model.json", out_dir / "training_log.csv",
            out_dir / "importance.json");
  cmd_evaluate(ctx, out_dir / "model.json", out_dir / "dataset" / "test.csv", out_dir / "report.json",
               out_dir / "report.csv");
  cmd_analyze(ctx, out_dir / "frames.csv", out_dir / "analysis");
  return code;
}

}  // namespace

// ------------------------------------------------------------- RunConfig

void RunConfig::propagate_seed() {
  gbdt.seed = seed;
  impute.regressor.seed = seed;
}

void RunConfig::validate() const {
  if (jobs < 1) throw Error(ErrorKind::Config, "jobs must be >= 1");
  synth.validate();
  impute.validate();
  dataset.validate();
  gbdt.validate();
  if (gbdt.objective != gbdt::Objective::MulticlassSoftmax || gbdt.n_classes != kNumClasses) {
    throw Error(ErrorKind::Config, "gbdt must be a 4-class softmax classifier");
  }
  if (!(filter.row_missing_drop_fraction > 0 && filter.row_missing_drop_fraction <= 1) ||
      !(filter.admission_min_present >= 0 && filter.admission_min_present <= 1) || filter.max_gap_minutes < 1 ||
      filter.min_rows < 2) {
    throw Error(ErrorKind::Config, "filter settings out of range");
  }
  if (analysis_features.size() < 2) throw Error(ErrorKind::Config, "analysis needs at least 2 features");
}

json RunConfig::to_json() const {
  json matrix = json::object();
  if (tag_csv) matrix["tags"] = *tag_csv;
  if (threshold_csv) matrix["thresholds"] = *threshold_csv;
  return {{"seed", seed},
          {"jobs", jobs},
          {"input", input},
          {"output_dir", output_dir},
          {"matrix", matrix},
          {"synth", synth.to_json()},
          {"filter", filter_to_json(filter)},
          {"impute", impute.to_json()},
          {"dataset", dataset.to_json()},
          {"gbdt", gbdt.to_json()},
          {"train", {{"class_weights", class_weights}, {"top_features", top_features}}},
          {"analysis", {{"features", analysis_features}}}};
}

RunConfig RunConfig::from_json(const json& j) {
  if (!j.is_object()) throw Error(ErrorKind::Config, "config must be a JSON object");
  RunConfig c;
  for (const auto& [key, v] : j.items()) {
    if (key == "seed") {
      c.seed = get<std::uint64_t>(v, key);
    } else if (key == "jobs") {
      c.jobs = get<int>(v, key);
    } else if (key == "input") {
      c.input = get<std::string>(v, key);
    } else if (key == "output_dir") {
      c.output_dir = get<std::string>(v, key);
    } else if (key == "matrix") {
      if (!v.is_object()) throw Error(ErrorKind::Config, "matrix must be an object");
      for (const auto& [k, p] : v.items()) {
        if (k == "tags") {
          c.tag_csv = get<std::string>(p, "matrix.tags");
        } else if (k == "thresholds") {
          c.threshold_csv = get<std::string>(p, "matrix.thresholds");
        } else {
          throw Error(ErrorKind::Config, "unknown matrix key '" + k + "'");
        }
      }
    } else if (key == "synth") {
      c.synth = synth::SynthConfig::from_json(v, c.synth);
    } else if (key == "filter") {
      c.filter = filter_from_json(v, c.filter);
    } else if (key == "impute") {
      c.impute = impute::ImputeConfig::from_json(v, c.impute);
    } else if (key == "dataset") {
      c.dataset = dataset::DatasetConfig::from_json(v, c.dataset);
    } else if (key == "gbdt") {
      c.gbdt = gbdt::GbdtConfig::from_json(v, c.gbdt);
    } else if (key == "train") {
      if (!v.is_object()) throw Error(ErrorKind::Config, "train must be an object");
      for (const auto& [k, x] : v.items()) {
        if (k == "class_weights") {
          c.class_weights = get<bool>(x, "train.class_weights");
        } else if (k == "top_features") {
          c.top_features = get<std::size_t>(x, "train.top_features");
        } else {
          throw Error(ErrorKind::Config, "unknown train key '" + k + "'");
        }
      }
    } else if (key == "analysis") {
      if (!v.is_object()) throw Error(ErrorKind::Config, "analysis must be an object");
      for (const auto& [k, x] : v.items()) {
        if (k != "features") throw Error(ErrorKind::Config, "unknown analysis key '" + k + "'");
        c.analysis_features = get<std::vector<std::string>>(x, "analysis.features");
      }
    } else {
      throw Error(ErrorKind::Config, "unknown config key '" + key + "'");
    }
  }
  c.propagate_seed();
  c.validate();
  return c;
}

RunConfig RunConfig::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::MissingInput, "cannot open config '" + path + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::Config, path + ": " + e.what());
  }
  return from_json(j);
}

std::string RunConfig::hash() const {
  auto j = to_json();
  j.erase("jobs");
  j.erase("input");
  j.erase("output_dir");
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(j.dump())));
  return buf;
}

std::string RunConfig::provenance() const {
  return "hypox config_hash=" + hash() + " seed=" + std::to_string(seed);
}

json RunConfig::provenance_json() const { return {{"config_hash", hash()}, {"seed", seed}}; }

// ------------------------------------------------------------------ main

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Hypoxemia severity pipeline: scoring, preprocessing, imputation, GBDT training and evaluation"};
  app.set_help_all_flag("--help-all");
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<int> jobs;
  bool dump_matrix = false;
  app.add_option("--config", config_path, "JSON run configuration");
  app.add_option("--seed", seed, "Seed for every random component (overrides the config)");
  app.add_option("--jobs", jobs, "Worker threads for per-admission stages")->check(CLI::PositiveNumber);
  app.add_flag("--dump-matrix", dump_matrix, "Print the normalized scoring matrix as JSON and exit");
  app.require_subcommand(0, 1);
  app.fallthrough();

  std::string in, out_file, aux, aux2, aux3;
  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic raw vitals CSV");
  synth_cmd->add_option("--out", out_file, "Raw CSV to write")->required();

  auto* score_cmd = app.add_subcommand("score", "Append TAG scores and severity labels to a raw CSV");
  score_cmd->add_option("--in", in, "Raw vitals CSV")->required();
  score_cmd->add_option("--out", out_file, "Scored CSV")->required();
  score_cmd->add_option("--alarms", aux, "Alarm-run JSON");

  auto* pre_cmd = app.add_subcommand("preprocess", "Merge, sanitize and filter raw records");
  pre_cmd->add_option("--in", in, "Raw vitals CSV")->required();
  pre_cmd->add_option("--out", out_file, "Filtered frame CSV")->required();
  pre_cmd->add_option("--report", aux, "Pipeline report JSON")->required();

  auto* imp_cmd = app.add_subcommand("impute", "Impute, interpolate to minutes and round");
  imp_cmd->add_option("--in", in, "Filtered frame CSV")->required();
  imp_cmd->add_option("--out", out_file, "Minute-grid frame CSV")->required();
  imp_cmd->add_option("--report", aux, "Imputation and interpolation report JSON")->required();

  auto* ds_cmd = app.add_subcommand("dataset", "Build GBM and sequence datasets with patient-wise splits");
  ds_cmd->add_option("--in", in, "Minute-grid frame CSV")->required();
  ds_cmd->add_option("--out-dir", out_file, "Dataset directory")->required();

  auto* train_cmd = app.add_subcommand("train", "Train the GBDT classifier");
  train_cmd->add_option("--data-dir", in, "Dataset directory")->required();
  train_cmd->add_option("--model", out_file, "Model JSON")->required();
  train_cmd->add_option("--log", aux, "Training-log CSV")->required();
  train_cmd->add_option("--importance", aux2, "Feature-importance JSON")->required();

  auto* eval_cmd = app.add_subcommand("evaluate", "Evaluate a model on a dataset CSV");
  eval_cmd->add_option("--model", in, "Model JSON")->required();
  eval_cmd->add_option("--data", aux, "Dataset CSV (e.g. test.csv)")->required();
  eval_cmd->add_option("--out", out_file, "Report JSON")->required();
  eval_cmd->add_option("--csv", aux2, "Optional one-row CSV summary");

  auto* an_cmd = app.add_subcommand("analyze", "Correlation matrix and PCA");
  an_cmd->add_option("--in", in, "Minute-grid frame CSV")->required();
  an_cmd->add_option("--out-dir", out_file, "Output directory")->required();

  auto* run_cmd = app.add_subcommand("run", "Run every stage end to end");
  run_cmd->add_option("--in", in, "Raw vitals CSV (synthesized when omitted)");
  run_cmd->add_option("--out-dir", out_file, "Output directory (default from config)");

  std::vector<std::string> argv_store{"hypox"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& a : argv_store) argv.push_back(a.data());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? int{kOk} : int{kInputError};
  }

  try {
    Context ctx{config_path.empty() ? RunConfig{} : RunConfig::load(config_path), out, err, std::nullopt};
    if (seed) ctx.config.seed = *seed;
    if (jobs) ctx.config.jobs = *jobs;
    ctx.config.propagate_seed();
    ctx.config.validate();

    if (dump_matrix) {
      auto j = ctx.matrix().dump();
      out << j.dump(2) << '\n';
      return kOk;
    }
    if (synth_cmd->parsed()) return cmd_synth(ctx, out_file);
    if (score_cmd->parsed()) return cmd_score(ctx, in, out_file, aux);
    if (pre_cmd->parsed()) return cmd_preprocess(ctx, in, out_file, aux);
    if (imp_cmd->parsed()) return cmd_impute(ctx, in, out_file, aux);
    if (ds_cmd->parsed()) return cmd_dataset(ctx, in, out_file);
    if (train_cmd->parsed()) return cmd_train(ctx, in, out_file, aux, aux2);
    if (eval_cmd->parsed()) return cmd_evaluate(ctx, in, aux, out_file, aux2);
    if (an_cmd->parsed()) return cmd_analyze(ctx, in, out_file);
    if (run_cmd->parsed()) {
      return cmd_run(ctx, out_file.empty() ? ctx.config.output_dir : out_file, in.empty() ? ctx.config.input : in);
    }
    err << app.help();
    return kInputError;
  } catch (const StageError& e) {
    err << "hypox " << e.stage << ": " << to_string(e.kind) << " error: " << e.what() << '\n';
    return exit_code_for(e.kind);
  } catch (const Error& e) {
    err << "hypox: " << to_string(e.kind()) << " error: " << e.what() << '\n';
    return exit_code_for(e.kind());
  }
}

}  // namespace hypox::cli
