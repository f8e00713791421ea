#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "hypox/common.hpp"
#include "hypox/matrix.hpp"

namespace hypox::gbdt {

enum class Objective : std::uint8_t { MulticlassSoftmax, RegressionL2 };

struct GbdtConfig {
  Objective objective = Objective::MulticlassSoftmax;
  int n_classes = kNumClasses;
  int rounds = 300;
  int early_stopping_rounds = 5;  // <= 0 disables
  double learning_rate = 0.3;
  int max_depth = 6;
  double min_child_weight = 1.0;
  double l2_lambda = 1.0;
  int max_bins = 255;
  double subsample = 1.0;
  std::uint64_t seed = 42;

  static GbdtConfig classifier();
  static GbdtConfig regressor();

  /// Throws Error(Config) on out-of-range fields.
  void validate() const;

  [[nodiscard]] nlohmann::json to_json() const;
  /// Starts from `base` and overrides the keys present; unknown keys throw.
  static GbdtConfig from_json(const nlohmann::json& j, GbdtConfig base);
};

/// Quantile bins per feature. Bin b holds values in (edges[b-1], edges[b]];
/// values above the last edge fall in the last bin; NaN goes to the
/// dedicated missing bin at index edges.size().
class HistogramBinning {
 public:
  static HistogramBinning fit(const Matrix& x, int max_bins);

  [[nodiscard]] std::size_t features() const noexcept { return edges_.size(); }
  [[nodiscard]] const std::vector<double>& edges(std::size_t f) const { return edges_[f]; }
  [[nodiscard]] std::size_t missing_bin(std::size_t f) const { return edges_[f].size(); }
  [[nodiscard]] std::size_t bin(std::size_t f, double value) const;

  [[nodiscard]] nlohmann::json to_json() const;
  static HistogramBinning from_json(const nlohmann::json& j);

 private:
  std::vector<std::vector<double>> edges_;
};

/// Flattened binary tree; node 0 is the root. A node is a leaf when
/// feature < 0.
struct TreeNode {
  int feature = -1;
  double threshold = 0.0;  // go left when x <= threshold
  bool missing_left = false;
  int left = -1;
  int right = -1;
  double value = 0.0;
  double gain = 0.0;
  double cover = 0.0;  // hessian sum
};

struct Tree {
  std::vector<TreeNode> nodes;

  [[nodiscard]] double predict(std::span<const double> x) const;
  [[nodiscard]] int depth() const;
};

struct RoundLoss {
  int round = 0;  // 1-based
  double train = 0.0;
  std::optional<double> validation;
};

class GbdtModel {
 public:
  [[nodiscard]] Objective objective() const noexcept { return config_.objective; }
  [[nodiscard]] const GbdtConfig& config() const noexcept { return config_; }
  [[nodiscard]] int best_round() const noexcept { return best_round_; }
  [[nodiscard]] int rounds_trained() const noexcept { return static_cast<int>(trees_.size()); }
  [[nodiscard]] std::size_t n_features() const noexcept { return n_features_; }
  [[nodiscard]] const std::vector<double>& base_score() const noexcept { return base_score_; }
  [[nodiscard]] const std::vector<std::vector<Tree>>& trees() const noexcept { return trees_; }
  [[nodiscard]] const std::vector<RoundLoss>& history() const noexcept { return history_; }
  [[nodiscard]] const HistogramBinning& binning() const noexcept { return binning_; }
  [[nodiscard]] const std::vector<std::string>& feature_names() const noexcept { return feature_names_; }
  void set_feature_names(std::vector<std::string> names);

  /// Accumulated per-class scores through best_round.
  [[nodiscard]] std::vector<double> raw_scores(std::span<const double> x) const;
  [[nodiscard]] double predict_value(std::span<const double> x) const;
  [[nodiscard]] std::vector<double> predict_values(const Matrix& x) const;

  [[nodiscard]] nlohmann::json to_json() const;
  static GbdtModel from_json(const nlohmann::json& j);

  /// Model with no boosting rounds; predictions come from base scores alone.
  static GbdtModel untrained(const GbdtConfig& config, std::size_t n_features);

 private:
  friend class Trainer;
  GbdtConfig config_;
  std::size_t n_features_ = 0;
  HistogramBinning binning_;
  std::vector<double> base_score_;
  std::vector<std::vector<Tree>> trees_;  // [round][class]
  std::vector<RoundLoss> history_;
  int best_round_ = 0;
  std::vector<std::string> feature_names_;
};

/// Weighted softmax boosting. Empty sample_weights means unit weights.
GbdtModel fit_classifier(const Matrix& x, std::span<const int> y, std::span<const double> sample_weights,
                         const GbdtConfig& config);

/// With a validation set for early stopping on weighted log-loss.
GbdtModel fit_classifier(const Matrix& x, std::span<const int> y, std::span<const double> sample_weights,
                         const GbdtConfig& config, const Matrix& x_valid, std::span<const int> y_valid,
                         std::span<const double> w_valid);

GbdtModel fit_regressor(const Matrix& x, std::span<const double> y, const GbdtConfig& config);

std::vector<double> predict_proba(const GbdtModel& model, std::span<const double> x);
/// Argmax of predict_proba; ties go to the higher (more severe) class.
int predict_label(const GbdtModel& model, std::span<const double> x);
int argmax_severe(std::span<const double> proba);

struct FeatureGain {
  std::size_t feature = 0;
  std::string name;
  double gain = 0.0;
};

/// Total split gain per feature through best_round, sorted descending
/// (ties by feature index). Every feature appears, unsplit ones with 0.
std::vector<FeatureGain> feature_importance(const GbdtModel& model);
std::vector<FeatureGain> top_k(std::vector<FeatureGain> importance, std::size_t k);

/// Numerically stable softmax.
std::vector<double> softmax(std::span<const double> logits);

/// Per-class gradient and hessian of w * cross-entropy(softmax(logits), label)
/// with respect to the logits.
void softmax_grad_hess(std::span<const double> logits, int label, double weight,
                       std::span<double> grad, std::span<double> hess);

/// -sum w_i log P[i][y_i] / sum w_i with P clipped to [1e-15, 1 - 1e-15].
double weighted_log_loss(std::span<const int> y, const Matrix& proba, std::span<const double> weights);

}  // namespace hypox::gbdt
