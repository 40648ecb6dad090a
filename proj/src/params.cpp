#include "phlearn/params.hpp"

namespace phl {

Index ParamVector::append(const std::string& name, const Vector& initial) {
  if (find(name)) throw StructuralError("duplicate parameter slice '" + name + "'");
  const Index offset = values_.size();
  Vector grown(offset + initial.size());
  grown.head(offset) = values_;
  grown.tail(initial.size()) = initial;
  values_ = std::move(grown);
  slices_.push_back({name, offset, initial.size()});
  return offset;
}

void ParamVector::set_values(const Vector& v) {
  require_dim(v.size(), values_.size(), "parameter vector");
  values_ = v;
}

std::optional<ParamSlice> ParamVector::find(const std::string& name) const {
  for (const auto& s : slices_) {
    if (s.name == name) return s;
  }
  return std::nullopt;
}

const ParamSlice& ParamVector::slice(const std::string& name) const {
  for (const auto& s : slices_) {
    if (s.name == name) return s;
  }
  throw StructuralError("unknown parameter slice '" + name + "'");
}

Vector ParamVector::read(const std::string& name) const {
  const auto& s = slice(name);
  return values_.segment(s.offset, s.size);
}

void ParamVector::write(const std::string& name, const Vector& v) {
  const auto& s = slice(name);
  require_dim(v.size(), s.size, "parameter slice");
  values_.segment(s.offset, s.size) = v;
}

bool ParamVector::consistent() const {
  Index cursor = 0;
  for (const auto& s : slices_) {
    if (s.offset != cursor || s.size < 0) return false;
    cursor += s.size;
  }
  return cursor == values_.size();
}

}  // namespace phl
