#pragma once

#include "phlearn/core.hpp"
#include "phlearn/params.hpp"

#include <memory>
#include <string>
#include <vector>

namespace phl {

/// Auxiliary signals an assembled model exposes besides its vector field.
enum class Channel {
  Output,        // y = h(x, u; w)
  LinkFlow,      // flows through the network links
  ElementPower,  // instantaneous power absorbed by each resistive element
};

/// Explicit dynamics xdot = f(t, x, u; w) with analytic partials.
///
/// Implementations are immutable after construction; every evaluation is
/// pure and may be called concurrently.
class OdeSystem {
 public:
  virtual ~OdeSystem() = default;

  virtual Index state_dim() const = 0;
  virtual Index input_dim() const { return 0; }
  Index param_dim() const { return params_.size(); }

  /// Parameter layout and initial (or ground-truth) values.
  const ParamVector& parameters() const { return params_; }
  virtual std::vector<std::string> state_names() const;

  virtual void rhs(double t, const Vector& x, const Vector& u, const Vector& w,
                   Vector& f) const = 0;
  virtual void rhs_partials(double t, const Vector& x, const Vector& u, const Vector& w,
                            Vector& f, Matrix& dfdx, Matrix& dfdw) const = 0;

  Vector rhs(double t, const Vector& x, const Vector& u, const Vector& w) const {
    Vector f;
    rhs(t, x, u, w, f);
    return f;
  }

  virtual Index channel_dim(Channel c) const;
  /// Evaluates a channel; partials are filled when the pointers are non-null.
  virtual void channel(Channel c, double t, const Vector& x, const Vector& u, const Vector& w,
                       Vector& value, Matrix* dx, Matrix* dw) const;

  Index output_dim() const { return channel_dim(Channel::Output); }

 protected:
  ParamVector params_;
};

using SystemPtr = std::shared_ptr<const OdeSystem>;

}  // namespace phl
