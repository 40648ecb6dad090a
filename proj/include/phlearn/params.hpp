#pragma once

#include "phlearn/core.hpp"

#include <cmath>
#include <optional>
#include <string>
#include <vector>

namespace phl {

struct ParamSlice {
  std::string name;
  Index offset = 0;
  Index size = 0;
};

/// Flat parameter vector with named contiguous slices, one per trainable
/// construct. Slices are appended in order, so they are disjoint and cover
/// the whole vector by construction.
class ParamVector {
 public:
  ParamVector() = default;

  /// Appends a slice and returns its offset.
  Index append(const std::string& name, const Vector& initial);

  Index size() const { return values_.size(); }
  const Vector& values() const { return values_; }
  Vector& values() { return values_; }
  void set_values(const Vector& v);

  const std::vector<ParamSlice>& slices() const { return slices_; }
  const ParamSlice& slice(const std::string& name) const;
  std::optional<ParamSlice> find(const std::string& name) const;

  Vector read(const std::string& name) const;
  void write(const std::string& name, const Vector& v);

  /// Slices are disjoint, ordered and cover [0, size()).
  bool consistent() const;

 private:
  Vector values_;
  std::vector<ParamSlice> slices_;
};

/// Positivity reparameterization shared by every constrained coefficient:
/// the optimizer sees an unconstrained raw value r, the model sees r^2.
template <typename Scalar>
inline Scalar positive(const Scalar& raw) {
  return raw * raw;
}
inline double positive_raw(double effective) { return std::sqrt(effective); }

}  // namespace phl
