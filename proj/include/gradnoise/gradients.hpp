#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "gradnoise/tensor.hpp"

namespace gradnoise {

/// Mutable view of one model parameter.
struct ParamRef {
  std::string name;
  Tensor* value;
};

using ParamRefs = std::vector<ParamRef>;

struct NamedTensor {
  std::string name;
  Tensor value;
};

/// Per-parameter gradients for one training step, keyed and ordered like the
/// parameters of the model that produced them.
class GradientSet {
 public:
  GradientSet() = default;

  /// Zero gradients shaped like `params`.
  static GradientSet zeros_like(const ParamRefs& params);

  void add(std::string name, Tensor grad) { entries_.push_back({std::move(name), std::move(grad)}); }

  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }

  NamedTensor& operator[](std::size_t i) { return entries_[i]; }
  const NamedTensor& operator[](std::size_t i) const { return entries_[i]; }
  const Tensor* find(std::string_view name) const;

  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

  std::vector<const Tensor*> tensors() const;
  double norm() const;
  std::size_t element_count() const;
  bool all_finite() const;

  /// Throws DimensionError unless names and shapes match `params` one-to-one.
  void check_matches(const ParamRefs& params) const;

  friend bool operator==(const GradientSet& a, const GradientSet& b);

 private:
  std::vector<NamedTensor> entries_;
};

}  // namespace gradnoise
