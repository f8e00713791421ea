#include "hypox/common.hpp"

namespace hypox {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidInput: return "invalid-input";
    case ErrorKind::UnsupportedPopulation: return "unsupported-population";
    case ErrorKind::MissingInput: return "missing-input";
    case ErrorKind::InsufficientData: return "insufficient-data";
    case ErrorKind::UnimputableColumn: return "unimputable-column";
    case ErrorKind::Training: return "training";
    case ErrorKind::WrongObjective: return "wrong-objective";
    case ErrorKind::UndefinedMetric: return "undefined-metric";
    case ErrorKind::DegenerateClass: return "degenerate-class";
    case ErrorKind::Config: return "config";
    case ErrorKind::Schema: return "schema";
  }
  return "unknown";
}

std::string_view vital_name(VitalKind kind) {
  switch (kind) {
    case VitalKind::RespiratoryRate: return "resp_rate";
    case VitalKind::SpO2: return "spo2";
    case VitalKind::HeartRate: return "heart_rate";
    case VitalKind::SystolicBP: return "sbp";
    case VitalKind::DiastolicBP: return "dbp";
    case VitalKind::Temperature: return "temperature";
  }
  return "?";
}

std::optional<VitalKind> parse_vital(std::string_view name) {
  for (auto k : kAllVitals) {
    if (vital_name(k) == name) return k;
  }
  return std::nullopt;
}

}  // namespace hypox
