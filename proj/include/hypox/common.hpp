#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace hypox {

enum class ErrorKind {
  InvalidInput,
  UnsupportedPopulation,
  MissingInput,
  InsufficientData,
  UnimputableColumn,
  Training,
  WrongObjective,
  UndefinedMetric,
  DegenerateClass,
  Config,
  Schema,
};

std::string_view to_string(ErrorKind kind);

/// Library-wide exception. The kind lets callers map failures onto exit
/// codes without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  [[nodiscard]] ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

// Declaration order is the fixed TAG vector order.
enum class VitalKind : std::uint8_t {
  RespiratoryRate,
  SpO2,
  HeartRate,
  SystolicBP,
  DiastolicBP,
  Temperature,
};

inline constexpr std::size_t kVitalCount = 6;

inline constexpr std::array<VitalKind, kVitalCount> kAllVitals = {
    VitalKind::RespiratoryRate, VitalKind::SpO2,        VitalKind::HeartRate,
    VitalKind::SystolicBP,      VitalKind::DiastolicBP, VitalKind::Temperature,
};

/// Column name used in CSV files ("resp_rate", "spo2", ...).
std::string_view vital_name(VitalKind kind);
std::optional<VitalKind> parse_vital(std::string_view name);

/// Plausibility bounds; values outside are treated as measurement errors.
struct Range {
  double lo = 0.0;
  double hi = 0.0;
  [[nodiscard]] bool contains(double v) const noexcept { return v >= lo && v <= hi; }
};

struct SanitizeRanges {
  std::array<Range, kVitalCount> bounds = {{
      {0.0, 300.0},  // resp rate
      {0.0, 100.0},  // spo2
      {0.0, 300.0},  // heart rate
      {0.0, 300.0},  // sbp
      {0.0, 300.0},  // dbp
      {0.0, 60.0},   // temperature
  }};

  [[nodiscard]] const Range& operator[](VitalKind k) const {
    return bounds[static_cast<std::size_t>(k)];
  }
};

inline constexpr int kNumClasses = 4;

}  // namespace hypox
