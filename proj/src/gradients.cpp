#include "gradnoise/gradients.hpp"

#include <cmath>

namespace gradnoise {

GradientSet GradientSet::zeros_like(const ParamRefs& params) {
  GradientSet g;
  for (const auto& p : params) g.add(p.name, Tensor::zeros(p.value->shape()));
  return g;
}

const Tensor* GradientSet::find(std::string_view name) const {
  for (const auto& e : entries_)
    if (e.name == name) return &e.value;
  return nullptr;
}

std::vector<const Tensor*> GradientSet::tensors() const {
  std::vector<const Tensor*> out;
  out.reserve(entries_.size());
  for (const auto& e : entries_) out.push_back(&e.value);
  return out;
}

double GradientSet::norm() const {
  const auto ts = tensors();
  return global_norm(std::span<const Tensor* const>(ts));
}

std::size_t GradientSet::element_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.value.size();
  return n;
}

bool GradientSet::all_finite() const {
  for (const auto& e : entries_)
    if (!e.value.all_finite()) return false;
  return true;
}

void GradientSet::check_matches(const ParamRefs& params) const {
  if (params.size() != entries_.size()) {
    throw DimensionError("gradient set has " + std::to_string(entries_.size()) + " entries but model has " +
                         std::to_string(params.size()) + " parameters");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].name != entries_[i].name) {
      throw DimensionError("gradient '" + entries_[i].name + "' does not match parameter '" + params[i].name + "'");
    }
    if (!(params[i].value->shape() == entries_[i].value.shape())) {
      throw DimensionError("gradient '" + entries_[i].name + "' has shape " + entries_[i].value.shape().str() +
                           ", parameter has " + params[i].value->shape().str());
    }
  }
}

bool operator==(const GradientSet& a, const GradientSet& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i].name != b[i].name || !(a[i].value == b[i].value)) return false;
  return true;
}

}  // namespace gradnoise
