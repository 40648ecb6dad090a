#include "phlearn/ode_system.hpp"

namespace phl {

std::vector<std::string> OdeSystem::state_names() const {
  std::vector<std::string> names;
  for (Index i = 0; i < state_dim(); ++i) names.push_back("x" + std::to_string(i + 1));
  return names;
}

Index OdeSystem::channel_dim(Channel c) const {
  return c == Channel::Output ? state_dim() : 0;
}

void OdeSystem::channel(Channel c, double, const Vector& x, const Vector&, const Vector&,
                        Vector& value, Matrix* dx, Matrix* dw) const {
  const Index rows = channel_dim(c);
  if (c == Channel::Output) {
    value = x;
    if (dx) *dx = Matrix::Identity(rows, state_dim());
  } else {
    value.resize(0);
    if (dx) dx->setZero(0, state_dim());
  }
  if (dw) dw->setZero(rows, param_dim());
}

}  // namespace phl
