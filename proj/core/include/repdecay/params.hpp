#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace repdecay {

/// Thrown when user supplied parameters violate a documented precondition.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Thrown when a numerical routine cannot meet its accuracy contract.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// What happens when a duplication picks a server that already holds the file.
enum class CollisionMode {
  AvoidHolders,  ///< target uniform over servers not holding the file
  UniformMerge,  ///< target uniform over all other servers; collisions are no-ops
};

/// Exactly `files` files, each placed on d uniformly chosen distinct servers.
struct FixedTotal {
  std::uint64_t files = 0;
};

/// Server i originates A_i i.i.d. files, A_i drawn from this law.
struct PerServerLaw {
  enum class Kind { Constant, Poisson, Discrete };
  Kind kind = Kind::Constant;
  double mean = 0.0;  ///< Constant value or Poisson mean
  /// Discrete: (value, weight) pairs; weights are normalized on use.
  std::vector<std::pair<std::int64_t, double>> support;

  static PerServerLaw constant(double value) { return {Kind::Constant, value, {}}; }
  static PerServerLaw poisson(double mean) { return {Kind::Poisson, mean, {}}; }
  static PerServerLaw discrete(std::vector<std::pair<std::int64_t, double>> s) {
    return {Kind::Discrete, 0.0, std::move(s)};
  }
  double expectation() const;
};

using InitialLoad = std::variant<FixedTotal, PerServerLaw>;

struct SystemParams {
  std::uint32_t n_servers = 100;
  double lambda = 1.0;  ///< per-server duplication rate
  double mu = 1.0;      ///< per-server failure rate
  std::uint32_t d_max = 2;
  InitialLoad initial_load = FixedTotal{100};
  double horizon = 5.0;
  std::uint64_t seed = 1;
  CollisionMode collision_mode = CollisionMode::AvoidHolders;

  double rho() const { return lambda / mu; }

  /// Throws ValidationError on any violated invariant.
  void validate() const;
};

std::string to_string(CollisionMode mode);
CollisionMode collision_mode_from_string(const std::string& name);

}  // namespace repdecay
