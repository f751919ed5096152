#pragma once

// Synthetic incident data: a log-normal base duration with documented
// multiplicative feature effects.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "incidur/domain.hpp"
#include "incidur/enrichment.hpp"

namespace incidur {

struct GeneratorConfig {
  int n_records = 6832;
  std::uint64_t seed = 7;
  double signal_strength = 1.0;       // scales every feature effect; 0 = no signal
  double mu = std::log(31.0);         // median 31 minutes
  double sigma = std::sqrt(2.0 * (std::log(45.2) - std::log(31.0)));  // mean 45.2
  double blank_rate = 0.05;           // chance each optional field is blanked
  int n_routes = 10;
  double min_minutes = 1.0;
  double max_minutes = 1358.0;

  void validate() const;
};

// Log-scale effects; a record's log-duration is mu + signal * (sum of its
// effects - sample mean) + residual noise with the remaining variance.
struct EffectTable {
  std::vector<std::pair<std::string, double>> entries;

  double get(const std::string& name) const;
};

const EffectTable& default_effects();

struct GeneratedData {
  std::vector<IncidentRecord> records;
  EnrichmentTable enrichment;
  double effect_variance = 0.0;    // sample variance of the scaled effects
  double residual_sigma = 0.0;
};

GeneratedData generate(const GeneratorConfig& config);

// key = value lines describing the config and every effect.
void write_manifest(std::ostream& out, const GeneratorConfig& config, const GeneratedData& data);

}  // namespace incidur
