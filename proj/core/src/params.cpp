#include "repdecay/params.hpp"

#include <cmath>

namespace repdecay {

double PerServerLaw::expectation() const {
  switch (kind) {
    case Kind::Constant:
    case Kind::Poisson:
      return mean;
    case Kind::Discrete: {
      double total = 0.0;
      double acc = 0.0;
      for (const auto& [value, weight] : support) {
        total += weight;
        acc += weight * static_cast<double>(value);
      }
      return total > 0.0 ? acc / total : 0.0;
    }
  }
  return 0.0;
}

namespace {

void validate_law(const PerServerLaw& law) {
  switch (law.kind) {
    case PerServerLaw::Kind::Constant:
      if (!(law.mean >= 0.0) || std::floor(law.mean) != law.mean) {
        throw ValidationError("constant per-server load must be a non-negative integer");
      }
      break;
    case PerServerLaw::Kind::Poisson:
      if (!(law.mean >= 0.0) || law.mean >= 700.0) {
        throw ValidationError("poisson per-server load needs mean in [0, 700)");
      }
      break;
    case PerServerLaw::Kind::Discrete: {
      if (law.support.empty()) {
        throw ValidationError("discrete per-server load has empty support");
      }
      double total = 0.0;
      for (const auto& [value, weight] : law.support) {
        if (!(weight >= 0.0)) throw ValidationError("discrete load weight must be >= 0");
        if (weight > 0.0 && value < 0) {
          throw ValidationError("per-server load law admits negative values");
        }
        total += weight;
      }
      if (!(total > 0.0)) throw ValidationError("discrete load weights sum to zero");
      break;
    }
  }
}

}  // namespace

void SystemParams::validate() const {
  if (n_servers == 0) throw ValidationError("n_servers must be positive");
  if (d_max == 0) throw ValidationError("d_max must be at least 1");
  if (n_servers < d_max) throw ValidationError("n_servers must be >= d_max");
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
    throw ValidationError("lambda must be finite and >= 0");
  }
  if (!(mu > 0.0) || !std::isfinite(mu)) throw ValidationError("mu must be finite and > 0");
  if (!(horizon >= 0.0) || !std::isfinite(horizon)) {
    throw ValidationError("horizon must be finite and >= 0");
  }
  if (const auto* law = std::get_if<PerServerLaw>(&initial_load)) validate_law(*law);
}

std::string to_string(CollisionMode mode) {
  return mode == CollisionMode::AvoidHolders ? "avoid_holders" : "uniform_merge";
}

CollisionMode collision_mode_from_string(const std::string& name) {
  if (name == "avoid_holders") return CollisionMode::AvoidHolders;
  if (name == "uniform_merge") return CollisionMode::UniformMerge;
  throw ValidationError("unknown collision mode: " + name);
}

}  // namespace repdecay
