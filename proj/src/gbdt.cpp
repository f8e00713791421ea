#include "hypox/gbdt.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

namespace hypox::gbdt {

namespace {

using nlohmann::json;

constexpr double kProbClip = 1e-15;
// Threshold for a split that sends every observed value left and only
// missing values right.
constexpr double kMissingOnlyThreshold = std::numeric_limits<double>::max();
// Gains below this fraction of the summed node scores are rounding noise.
// Relative so that uniformly rescaled weights give the same trees.
constexpr double kRelativeGainEps = 1e-10;

[[noreturn]] void training_error(const std::string& msg) { throw Error(ErrorKind::Training, msg); }
[[noreturn]] void config_error(const std::string& msg) { throw Error(ErrorKind::Config, msg); }

std::string_view objective_name(Objective o) {
  return o == Objective::MulticlassSoftmax ? "multiclass_softmax" : "regression_l2";
}

Objective parse_objective(const std::string& s) {
  if (s == "multiclass_softmax") return Objective::MulticlassSoftmax;
  if (s == "regression_l2") return Objective::RegressionL2;
  config_error("unknown objective '" + s + "'");
}

struct HistBin {
  double g = 0.0;
  double h = 0.0;
  std::uint32_t n = 0;
};

struct SplitCandidate {
  bool found = false;
  std::size_t feature = 0;
  std::size_t bin = 0;  // last value bin sent left
  bool missing_left = false;
  double gain = 0.0;
  double threshold = 0.0;
};

/// Binned copy of the training matrix, stored feature-major.
struct BinnedMatrix {
  std::size_t rows = 0;
  std::size_t features = 0;
  std::vector<std::uint8_t> bins;
  std::vector<std::size_t> offset;  // histogram offset per feature
  std::size_t hist_size = 0;

  BinnedMatrix(const Matrix& x, const HistogramBinning& binning) : rows(x.rows()), features(x.cols()) {
    bins.resize(rows * features);
    offset.resize(features);
    for (std::size_t f = 0; f < features; ++f) {
      offset[f] = hist_size;
      hist_size += binning.missing_bin(f) + 1;
      for (std::size_t r = 0; r < rows; ++r) {
        bins[f * rows + r] = static_cast<std::uint8_t>(binning.bin(f, x(r, f)));
      }
    }
  }

  [[nodiscard]] std::uint8_t at(std::size_t f, std::size_t r) const { return bins[f * rows + r]; }
};

class TreeBuilder {
 public:
  TreeBuilder(const BinnedMatrix& data, const HistogramBinning& binning, const GbdtConfig& config)
      : data_(data), binning_(binning), config_(config) {}

  Tree build(std::span<const double> g, std::span<const double> h, std::vector<std::uint32_t> rows) {
    g_ = g;
    h_ = h;
    tree_ = Tree{};
    std::vector<HistBin> hist(data_.hist_size);
    fill_histogram(rows, hist);
    double G = 0.0, H = 0.0;
    for (auto r : rows) {
      G += g_[r];
      H += h_[r];
    }
    grow(rows, hist, G, H, 0);
    return std::move(tree_);
  }

 private:
  void fill_histogram(const std::vector<std::uint32_t>& rows, std::vector<HistBin>& hist) const {
    std::fill(hist.begin(), hist.end(), HistBin{});
    for (std::size_t f = 0; f < data_.features; ++f) {
      HistBin* base = hist.data() + data_.offset[f];
      const std::uint8_t* col = data_.bins.data() + f * data_.rows;
      for (auto r : rows) {
        auto& b = base[col[r]];
        b.g += g_[r];
        b.h += h_[r];
        ++b.n;
      }
    }
  }

  [[nodiscard]] double leaf_value(double G, double H) const {
    const double denom = H + config_.l2_lambda;
    if (denom <= 0.0) return 0.0;
    return -config_.learning_rate * G / denom;
  }

  [[nodiscard]] double score(double G, double H) const {
    const double denom = H + config_.l2_lambda;
    return denom > 0.0 ? G * G / denom : 0.0;
  }

  [[nodiscard]] SplitCandidate find_split(const std::vector<HistBin>& hist, double G, double H,
                                          std::uint32_t N) const {
    SplitCandidate best;
    const double parent = score(G, H);
    const double mcw = config_.min_child_weight;
    for (std::size_t f = 0; f < data_.features; ++f) {
      const HistBin* base = hist.data() + data_.offset[f];
      const std::size_t nb = binning_.missing_bin(f);
      const HistBin& miss = base[nb];
      HistBin acc;
      for (std::size_t b = 0; b < nb; ++b) {
        acc.g += base[b].g;
        acc.h += base[b].h;
        acc.n += base[b].n;
        const bool last = b + 1 == nb;
        for (int ml = 0; ml < 2; ++ml) {
          const bool missing_left = ml == 1;
          if (missing_left && (miss.n == 0 || last)) continue;
          if (last && (miss.n == 0 || missing_left)) continue;
          const double GL = acc.g + (missing_left ? miss.g : 0.0);
          const double HL = acc.h + (missing_left ? miss.h : 0.0);
          const std::uint32_t NL = acc.n + (missing_left ? miss.n : 0);
          const double GR = G - GL;
          const double HR = H - HL;
          const std::uint32_t NR = N - NL;
          if (NL == 0 || NR == 0 || HL < mcw || HR < mcw) continue;
          if (HL + config_.l2_lambda <= 0.0 || HR + config_.l2_lambda <= 0.0) continue;
          const double sl = score(GL, HL);
          const double sr = score(GR, HR);
          const double gain = 0.5 * (sl + sr - parent);
          if (gain > kRelativeGainEps * (sl + sr + parent) && gain > best.gain) {
            const auto& edges = binning_.edges(f);
            best = {true, f, b, missing_left, gain, last ? kMissingOnlyThreshold : edges[b]};
          }
        }
      }
    }
    return best;
  }

  int grow(std::vector<std::uint32_t>& rows, std::vector<HistBin>& hist, double G, double H, int depth) {
    const int id = static_cast<int>(tree_.nodes.size());
    tree_.nodes.push_back({});
    tree_.nodes[id].value = leaf_value(G, H);
    tree_.nodes[id].cover = H;
    if (depth >= config_.max_depth || rows.size() < 2) return id;

    const auto split = find_split(hist, G, H, static_cast<std::uint32_t>(rows.size()));
    if (!split.found) return id;

    const std::size_t miss_bin = binning_.missing_bin(split.feature);
    auto goes_left = [&](std::uint32_t r) {
      const auto b = data_.at(split.feature, r);
      if (b == miss_bin) return split.missing_left;
      return b <= split.bin;
    };
    std::vector<std::uint32_t> left_rows, right_rows;
    left_rows.reserve(rows.size());
    right_rows.reserve(rows.size());
    double GL = 0.0, HL = 0.0;
    for (auto r : rows) {
      if (goes_left(r)) {
        left_rows.push_back(r);
        GL += g_[r];
        HL += h_[r];
      } else {
        right_rows.push_back(r);
      }
    }
    rows.clear();
    rows.shrink_to_fit();

    // Build the smaller child's histogram and derive the sibling by subtraction.
    std::vector<HistBin> small(data_.hist_size);
    const bool left_small = left_rows.size() <= right_rows.size();
    fill_histogram(left_small ? left_rows : right_rows, small);
    for (std::size_t i = 0; i < hist.size(); ++i) {
      hist[i].g -= small[i].g;
      hist[i].h -= small[i].h;
      hist[i].n -= small[i].n;
    }
    auto& left_hist = left_small ? small : hist;
    auto& right_hist = left_small ? hist : small;

    auto& node = tree_.nodes[id];
    node.feature = static_cast<int>(split.feature);
    node.threshold = split.threshold;
    node.missing_left = split.missing_left;
    node.gain = split.gain;

    const int l = grow(left_rows, left_hist, GL, HL, depth + 1);
    tree_.nodes[id].left = l;
    const int r = grow(right_rows, right_hist, G - GL, H - HL, depth + 1);
    tree_.nodes[id].right = r;
    return id;
  }

  const BinnedMatrix& data_;
  const HistogramBinning& binning_;
  const GbdtConfig& config_;
  std::span<const double> g_;
  std::span<const double> h_;
  Tree tree_;
};

void check_features(const Matrix& x, const char* what) {
  for (double v : x.data()) {
    if (std::isinf(v)) training_error(std::string("infinite feature value in ") + what);
  }
}

void check_weights(std::span<const double> w, std::size_t n) {
  if (!w.empty() && w.size() != n) training_error("sample weight count does not match rows");
  for (double v : w) {
    if (!std::isfinite(v) || v <= 0.0) training_error("sample weights must be finite and positive");
  }
}

void check_labels(std::span<const int> y, std::size_t n, int k, bool require_two_classes) {
  if (y.size() != n) training_error("label count does not match rows");
  std::vector<bool> seen(static_cast<std::size_t>(k), false);
  for (int v : y) {
    if (v < 0 || v >= k) training_error("label " + std::to_string(v) + " outside 0.." + std::to_string(k - 1));
    seen[static_cast<std::size_t>(v)] = true;
  }
  if (require_two_classes && std::count(seen.begin(), seen.end(), true) < 2) {
    training_error("training labels contain a single class");
  }
}

std::vector<std::uint32_t> sample_rows(std::size_t n, double subsample, std::mt19937_64& rng) {
  std::vector<std::uint32_t> rows;
  rows.reserve(n);
  if (subsample >= 1.0) {
    for (std::size_t i = 0; i < n; ++i) rows.push_back(static_cast<std::uint32_t>(i));
    return rows;
  }
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    if (u(rng) < subsample) rows.push_back(static_cast<std::uint32_t>(i));
  }
  if (rows.empty()) rows.push_back(static_cast<std::uint32_t>(rng() % n));
  return rows;
}

json tree_to_json(const Tree& t) {
  json feature = json::array(), threshold = json::array(), missing_left = json::array(), left = json::array(),
       right = json::array(), value = json::array(), gain = json::array(), cover = json::array();
  for (const auto& n : t.nodes) {
    feature.push_back(n.feature);
    threshold.push_back(n.threshold);
    missing_left.push_back(n.missing_left ? 1 : 0);
    left.push_back(n.left);
    right.push_back(n.right);
    value.push_back(n.value);
    gain.push_back(n.gain);
    cover.push_back(n.cover);
  }
  return {{"feature", feature}, {"threshold", threshold}, {"missing_left", missing_left}, {"left", left},
          {"right", right},     {"value", value},         {"gain", gain},                 {"cover", cover}};
}

Tree tree_from_json(const json& j) {
  Tree t;
  const auto n = j.at("feature").size();
  t.nodes.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto& node = t.nodes[i];
    node.feature = j.at("feature")[i].get<int>();
    node.threshold = j.at("threshold")[i].get<double>();
    node.missing_left = j.at("missing_left")[i].get<int>() != 0;
    node.left = j.at("left")[i].get<int>();
    node.right = j.at("right")[i].get<int>();
    node.value = j.at("value")[i].get<double>();
    node.gain = j.at("gain")[i].get<double>();
    node.cover = j.at("cover")[i].get<double>();
  }
  return t;
}

double mse(std::span<const double> pred, std::span<const double> y) {
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) s += (pred[i] - y[i]) * (pred[i] - y[i]);
  return y.empty() ? 0.0 : s / static_cast<double>(y.size());
}

}  // namespace

// ---------------------------------------------------------------------------
// Config

GbdtConfig GbdtConfig::classifier() { return GbdtConfig{}; }

GbdtConfig GbdtConfig::regressor() {
  GbdtConfig c;
  c.objective = Objective::RegressionL2;
  c.n_classes = 1;
  c.learning_rate = 0.1;
  return c;
}

void GbdtConfig::validate() const {
  if (rounds < 1) config_error("rounds must be >= 1");
  if (max_bins < 2 || max_bins > 255) config_error("max_bins must be in [2, 255]");
  if (!(subsample > 0.0 && subsample <= 1.0)) config_error("subsample must be in (0, 1]");
  if (!(learning_rate > 0.0)) config_error("learning_rate must be positive");
  if (max_depth < 1) config_error("max_depth must be >= 1");
  if (!(min_child_weight >= 0.0)) config_error("min_child_weight must be >= 0");
  if (!(l2_lambda >= 0.0)) config_error("l2_lambda must be >= 0");
  if (objective == Objective::MulticlassSoftmax && n_classes < 2) config_error("n_classes must be >= 2");
}

json GbdtConfig::to_json() const {
  return {{"objective", objective_name(objective)},
          {"n_classes", n_classes},
          {"rounds", rounds},
          {"early_stopping_rounds", early_stopping_rounds},
          {"learning_rate", learning_rate},
          {"max_depth", max_depth},
          {"min_child_weight", min_child_weight},
          {"l2_lambda", l2_lambda},
          {"max_bins", max_bins},
          {"subsample", subsample},
          {"seed", seed}};
}

GbdtConfig GbdtConfig::from_json(const json& j, GbdtConfig c) {
  if (!j.is_object()) config_error("gbdt config must be an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    const auto& k = it.key();
    const auto& v = it.value();
    try {
      if (k == "objective") c.objective = parse_objective(v.get<std::string>());
      else if (k == "n_classes") c.n_classes = v.get<int>();
      else if (k == "rounds") c.rounds = v.get<int>();
      else if (k == "early_stopping_rounds") c.early_stopping_rounds = v.get<int>();
      else if (k == "learning_rate") c.learning_rate = v.get<double>();
      else if (k == "max_depth") c.max_depth = v.get<int>();
      else if (k == "min_child_weight") c.min_child_weight = v.get<double>();
      else if (k == "l2_lambda") c.l2_lambda = v.get<double>();
      else if (k == "max_bins") c.max_bins = v.get<int>();
      else if (k == "subsample") c.subsample = v.get<double>();
      else if (k == "seed") c.seed = v.get<std::uint64_t>();
      else config_error("unknown gbdt config key '" + k + "'");
    } catch (const json::exception& e) {
      config_error("gbdt config key '" + k + "': " + e.what());
    }
  }
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------
// Binning

HistogramBinning HistogramBinning::fit(const Matrix& x, int max_bins) {
  HistogramBinning b;
  const auto value_bins = static_cast<std::size_t>(max_bins - 1);
  b.edges_.resize(x.cols());
  std::vector<double> values;
  for (std::size_t f = 0; f < x.cols(); ++f) {
    values.clear();
    for (std::size_t r = 0; r < x.rows(); ++r) {
      const double v = x(r, f);
      if (!std::isnan(v)) values.push_back(v);
    }
    std::sort(values.begin(), values.end());
    std::vector<double> distinct;
    std::unique_copy(values.begin(), values.end(), std::back_inserter(distinct));
    auto& edges = b.edges_[f];
    if (distinct.size() <= value_bins) {
      edges = std::move(distinct);
    } else {
      const std::size_t m = values.size();
      for (std::size_t k = 1; k <= value_bins; ++k) {
        const std::size_t idx = (k * m + value_bins - 1) / value_bins - 1;
        const double e = values[std::min(idx, m - 1)];
        if (edges.empty() || e > edges.back()) edges.push_back(e);
      }
    }
    if (edges.empty()) edges.push_back(0.0);  // all-missing feature
  }
  return b;
}

std::size_t HistogramBinning::bin(std::size_t f, double value) const {
  const auto& e = edges_[f];
  if (std::isnan(value)) return e.size();
  auto it = std::lower_bound(e.begin(), e.end(), value);
  if (it == e.end()) return e.size() - 1;
  return static_cast<std::size_t>(it - e.begin());
}

json HistogramBinning::to_json() const { return {{"edges", edges_}}; }

HistogramBinning HistogramBinning::from_json(const json& j) {
  HistogramBinning b;
  b.edges_ = j.at("edges").get<std::vector<std::vector<double>>>();
  return b;
}

// ---------------------------------------------------------------------------
// Trees and model

double Tree::predict(std::span<const double> x) const {
  if (nodes.empty()) return 0.0;
  int i = 0;
  while (nodes[i].feature >= 0) {
    const auto& n = nodes[i];
    const double v = x[static_cast<std::size_t>(n.feature)];
    const bool left = std::isnan(v) ? n.missing_left : v <= n.threshold;
    i = left ? n.left : n.right;
  }
  return nodes[i].value;
}

int Tree::depth() const {
  if (nodes.empty()) return 0;
  std::vector<int> d(nodes.size(), 0);
  int best = 0;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    best = std::max(best, d[i]);
    if (nodes[i].feature >= 0) {
      d[static_cast<std::size_t>(nodes[i].left)] = d[i] + 1;
      d[static_cast<std::size_t>(nodes[i].right)] = d[i] + 1;
    }
  }
  return best;
}

void GbdtModel::set_feature_names(std::vector<std::string> names) {
  if (names.size() != n_features_) {
    throw Error(ErrorKind::InvalidInput, "feature name count does not match model");
  }
  feature_names_ = std::move(names);
}

std::vector<double> GbdtModel::raw_scores(std::span<const double> x) const {
  if (x.size() != n_features_) {
    throw Error(ErrorKind::InvalidInput, "expected " + std::to_string(n_features_) + " features, got " +
                                             std::to_string(x.size()));
  }
  std::vector<double> s = base_score_;
  const auto rounds = std::min<std::size_t>(static_cast<std::size_t>(best_round_), trees_.size());
  for (std::size_t r = 0; r < rounds; ++r) {
    for (std::size_t c = 0; c < s.size(); ++c) s[c] += trees_[r][c].predict(x);
  }
  return s;
}

double GbdtModel::predict_value(std::span<const double> x) const {
  if (objective() != Objective::RegressionL2) {
    throw Error(ErrorKind::WrongObjective, "predict_value requires a regression model");
  }
  return raw_scores(x)[0];
}

std::vector<double> GbdtModel::predict_values(const Matrix& x) const {
  std::vector<double> out(x.rows());
  for (std::size_t r = 0; r < x.rows(); ++r) out[r] = predict_value(x.row(r));
  return out;
}

GbdtModel GbdtModel::untrained(const GbdtConfig& config, std::size_t n_features) {
  config.validate();
  GbdtModel m;
  m.config_ = config;
  m.n_features_ = n_features;
  m.binning_ = HistogramBinning::fit(Matrix(0, n_features), config.max_bins);
  const auto k = config.objective == Objective::MulticlassSoftmax ? config.n_classes : 1;
  m.base_score_.assign(static_cast<std::size_t>(k), 0.0);
  return m;
}

json GbdtModel::to_json() const {
  json trees = json::array();
  for (const auto& round : trees_) {
    json per = json::array();
    for (const auto& t : round) per.push_back(tree_to_json(t));
    trees.push_back(std::move(per));
  }
  json history = json::array();
  for (const auto& h : history_) {
    json e = {{"round", h.round}, {"train", h.train}};
    e["validation"] = h.validation ? json(*h.validation) : json(nullptr);
    history.push_back(std::move(e));
  }
  return {{"schema", "hypox.gbdt/1"},
          {"config", config_.to_json()},
          {"n_features", n_features_},
          {"feature_names", feature_names_},
          {"binning", binning_.to_json()},
          {"base_score", base_score_},
          {"best_round", best_round_},
          {"trees", std::move(trees)},
          {"history", std::move(history)}};
}

GbdtModel GbdtModel::from_json(const json& j) {
  if (j.value("schema", "") != "hypox.gbdt/1") {
    throw Error(ErrorKind::Schema, "not a hypox.gbdt/1 model file");
  }
  try {
    GbdtModel m;
    m.config_ = GbdtConfig::from_json(j.at("config"), GbdtConfig{});
    m.n_features_ = j.at("n_features").get<std::size_t>();
    m.feature_names_ = j.at("feature_names").get<std::vector<std::string>>();
    m.binning_ = HistogramBinning::from_json(j.at("binning"));
    m.base_score_ = j.at("base_score").get<std::vector<double>>();
    m.best_round_ = j.at("best_round").get<int>();
    for (const auto& round : j.at("trees")) {
      std::vector<Tree> per;
      for (const auto& t : round) per.push_back(tree_from_json(t));
      m.trees_.push_back(std::move(per));
    }
    for (const auto& h : j.at("history")) {
      RoundLoss r{h.at("round").get<int>(), h.at("train").get<double>(), std::nullopt};
      if (!h.at("validation").is_null()) r.validation = h.at("validation").get<double>();
      m.history_.push_back(r);
    }
    return m;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Schema, std::string("malformed model file: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Training

class Trainer {
 public:
  static GbdtModel classify(const Matrix& x, std::span<const int> y, std::span<const double> w,
                            const GbdtConfig& config, const Matrix* xv, std::span<const int> yv,
                            std::span<const double> wv) {
    config.validate();
    if (config.objective != Objective::MulticlassSoftmax) {
      throw Error(ErrorKind::WrongObjective, "fit_classifier requires the multiclass objective");
    }
    const std::size_t n = x.rows();
    if (n == 0 || x.cols() == 0) training_error("empty training data");
    check_features(x, "training data");
    check_weights(w, n);
    check_labels(y, n, config.n_classes, true);
    if (xv) {
      if (xv->cols() != x.cols()) training_error("validation feature count differs from training");
      check_features(*xv, "validation data");
      check_weights(wv, xv->rows());
      check_labels(yv, xv->rows(), config.n_classes, false);
    }

    const auto K = static_cast<std::size_t>(config.n_classes);
    GbdtModel m;
    m.config_ = config;
    m.n_features_ = x.cols();
    m.binning_ = HistogramBinning::fit(x, config.max_bins);
    m.base_score_.assign(K, 0.0);
    const BinnedMatrix binned(x, m.binning_);
    TreeBuilder builder(binned, m.binning_, m.config_);
    std::mt19937_64 rng(config.seed);

    auto unit = [](std::span<const double> ws, std::size_t count) {
      return ws.empty() ? std::vector<double>(count, 1.0) : std::vector<double>(ws.begin(), ws.end());
    };
    const auto weights = unit(w, n);
    const auto valid_weights = xv ? unit(wv, xv->rows()) : std::vector<double>{};

    Matrix scores(n, K, 0.0);
    Matrix valid_scores(xv ? xv->rows() : 0, K, 0.0);
    std::vector<double> g(n), h(n);
    Matrix grad(n, K), hess(n, K);

    std::optional<double> best_loss;
    for (int round = 0; round < config.rounds; ++round) {
      for (std::size_t i = 0; i < n; ++i) {
        softmax_grad_hess(scores.row(i), y[i], weights[i], grad.row(i), hess.row(i));
      }
      const auto rows = sample_rows(n, config.subsample, rng);
      std::vector<Tree> round_trees;
      for (std::size_t c = 0; c < K; ++c) {
        for (std::size_t i = 0; i < n; ++i) {
          g[i] = grad(i, c);
          h[i] = hess(i, c);
        }
        round_trees.push_back(builder.build(g, h, rows));
      }
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t c = 0; c < K; ++c) scores(i, c) += round_trees[c].predict(x.row(i));
      }
      RoundLoss loss{round + 1, softmax_loss(scores, y, weights), std::nullopt};
      if (xv) {
        for (std::size_t i = 0; i < xv->rows(); ++i) {
          for (std::size_t c = 0; c < K; ++c) valid_scores(i, c) += round_trees[c].predict(xv->row(i));
        }
        loss.validation = softmax_loss(valid_scores, yv, valid_weights);
      }
      m.trees_.push_back(std::move(round_trees));
      m.history_.push_back(loss);
      if (!advance(m, loss, best_loss)) break;
    }
    if (!xv || config.early_stopping_rounds <= 0) m.best_round_ = m.rounds_trained();
    return m;
  }

  static GbdtModel regress(const Matrix& x, std::span<const double> y, const GbdtConfig& config) {
    config.validate();
    if (config.objective != Objective::RegressionL2) {
      throw Error(ErrorKind::WrongObjective, "fit_regressor requires the regression objective");
    }
    const std::size_t n = x.rows();
    if (n == 0 || x.cols() == 0) training_error("empty training data");
    if (y.size() != n) training_error("target count does not match rows");
    check_features(x, "training data");
    for (double v : y) {
      if (!std::isfinite(v)) training_error("non-finite regression target");
    }
    GbdtModel m;
    m.config_ = config;
    m.n_features_ = x.cols();
    m.binning_ = HistogramBinning::fit(x, config.max_bins);
    const double mean = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(n);
    m.base_score_ = {mean};
    const BinnedMatrix binned(x, m.binning_);
    TreeBuilder builder(binned, m.binning_, m.config_);
    std::mt19937_64 rng(config.seed);

    std::vector<double> pred(n, mean), g(n), h(n, 1.0);
    for (int round = 0; round < config.rounds; ++round) {
      for (std::size_t i = 0; i < n; ++i) g[i] = pred[i] - y[i];
      const auto rows = sample_rows(n, config.subsample, rng);
      Tree t = builder.build(g, h, rows);
      for (std::size_t i = 0; i < n; ++i) pred[i] += t.predict(x.row(i));
      m.trees_.push_back({std::move(t)});
      m.history_.push_back({round + 1, mse(pred, y), std::nullopt});
    }
    m.best_round_ = m.rounds_trained();
    return m;
  }

 private:
  static double softmax_loss(const Matrix& scores, std::span<const int> y, std::span<const double> w) {
    Matrix proba(scores.rows(), scores.cols());
    for (std::size_t i = 0; i < scores.rows(); ++i) {
      const auto p = softmax(scores.row(i));
      std::copy(p.begin(), p.end(), proba.row(i).begin());
    }
    return weighted_log_loss(y, proba, w);
  }

  // Returns false when training should stop.
  static bool advance(GbdtModel& m, const RoundLoss& loss, std::optional<double>& best_loss) {
    if (!loss.validation || m.config_.early_stopping_rounds <= 0) return true;
    if (!best_loss || *loss.validation < *best_loss) {
      best_loss = loss.validation;
      m.best_round_ = loss.round;
      return true;
    }
    return loss.round - m.best_round_ < m.config_.early_stopping_rounds;
  }
};

GbdtModel fit_classifier(const Matrix& x, std::span<const int> y, std::span<const double> sample_weights,
                         const GbdtConfig& config) {
  return Trainer::classify(x, y, sample_weights, config, nullptr, {}, {});
}

GbdtModel fit_classifier(const Matrix& x, std::span<const int> y, std::span<const double> sample_weights,
                         const GbdtConfig& config, const Matrix& x_valid, std::span<const int> y_valid,
                         std::span<const double> w_valid) {
  return Trainer::classify(x, y, sample_weights, config, &x_valid, y_valid, w_valid);
}

GbdtModel fit_regressor(const Matrix& x, std::span<const double> y, const GbdtConfig& config) {
  return Trainer::regress(x, y, config);
}

// ---------------------------------------------------------------------------
// Prediction, importance, losses

std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> p(logits.size());
  if (logits.empty()) return p;
  const double mx = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(logits[i] - mx);
    sum += p[i];
  }
  for (auto& v : p) v /= sum;
  return p;
}

void softmax_grad_hess(std::span<const double> logits, int label, double weight, std::span<double> grad,
                       std::span<double> hess) {
  const auto p = softmax(logits);
  for (std::size_t c = 0; c < p.size(); ++c) {
    const double target = static_cast<int>(c) == label ? 1.0 : 0.0;
    grad[c] = weight * (p[c] - target);
    hess[c] = weight * p[c] * (1.0 - p[c]);
  }
}

std::vector<double> predict_proba(const GbdtModel& model, std::span<const double> x) {
  if (model.objective() != Objective::MulticlassSoftmax) {
    throw Error(ErrorKind::WrongObjective, "predict_proba requires a multiclass model");
  }
  return softmax(model.raw_scores(x));
}

int argmax_severe(std::span<const double> proba) {
  int best = 0;
  for (std::size_t c = 1; c < proba.size(); ++c) {
    if (proba[c] >= proba[static_cast<std::size_t>(best)]) best = static_cast<int>(c);
  }
  return best;
}

int predict_label(const GbdtModel& model, std::span<const double> x) {
  return argmax_severe(predict_proba(model, x));
}

std::vector<FeatureGain> feature_importance(const GbdtModel& model) {
  std::vector<FeatureGain> out(model.n_features());
  for (std::size_t f = 0; f < out.size(); ++f) {
    out[f].feature = f;
    out[f].name = f < model.feature_names().size() ? model.feature_names()[f] : "f" + std::to_string(f);
  }
  const auto rounds = std::min<std::size_t>(static_cast<std::size_t>(model.best_round()), model.trees().size());
  for (std::size_t r = 0; r < rounds; ++r) {
    for (const auto& t : model.trees()[r]) {
      for (const auto& n : t.nodes) {
        if (n.feature >= 0) out[static_cast<std::size_t>(n.feature)].gain += n.gain;
      }
    }
  }
  std::stable_sort(out.begin(), out.end(), [](const FeatureGain& a, const FeatureGain& b) { return a.gain > b.gain; });
  return out;
}

std::vector<FeatureGain> top_k(std::vector<FeatureGain> importance, std::size_t k) {
  if (importance.size() > k) importance.resize(k);
  return importance;
}

double weighted_log_loss(std::span<const int> y, const Matrix& proba, std::span<const double> weights) {
  if (proba.rows() != y.size() || (!weights.empty() && weights.size() != y.size())) {
    throw Error(ErrorKind::InvalidInput, "weighted_log_loss: shape mismatch");
  }
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (y[i] < 0 || static_cast<std::size_t>(y[i]) >= proba.cols()) {
      throw Error(ErrorKind::InvalidInput, "weighted_log_loss: label outside probability columns");
    }
    const double w = weights.empty() ? 1.0 : weights[i];
    const double p = std::clamp(proba(i, static_cast<std::size_t>(y[i])), kProbClip, 1.0 - kProbClip);
    num -= w * std::log(p);
    den += w;
  }
  if (den <= 0.0) throw Error(ErrorKind::InvalidInput, "weighted_log_loss: zero total weight");
  return num / den;
}

}  // namespace hypox::gbdt
