#pragma once

#include <limits>
#include <stdexcept>
#include <string>

namespace memtune {

/// Input values violate a documented invariant (bad geometry, bad grid, ...).
class spec_error : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Loss of tension. The tensioned-membrane model is invalid for S < 0, so
/// operations refuse to evaluate there instead of clamping. When the error
/// arises from a power sweep, critical_power() carries the smallest power
/// at which the tension vanishes (NaN when not applicable).
class buckling_error : public std::domain_error {
 public:
  explicit buckling_error(const std::string& what,
                          double stress_Pa = std::numeric_limits<double>::quiet_NaN(),
                          double critical_power_W = std::numeric_limits<double>::quiet_NaN())
      : std::domain_error(what), stress_(stress_Pa), critical_power_(critical_power_W) {}

  double stress() const noexcept { return stress_; }
  double critical_power() const noexcept { return critical_power_; }

 private:
  double stress_;
  double critical_power_;
};

/// A numerical routine failed to meet its convergence contract.
class solver_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A fitting routine could not produce a valid estimate (rank deficiency,
/// missing baseline, too little signal, ...).
class fit_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Measured data violates the model the extraction assumes (beating
/// envelope, non-decaying record, ...).
class model_violation : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// File parsing / writing problems. Messages carry file and line context.
class io_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace memtune
