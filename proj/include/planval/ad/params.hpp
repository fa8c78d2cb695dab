#pragma once

#include "planval/core.hpp"

#include <string>
#include <string_view>
#include <vector>

namespace planval::ad {

/// Ordered collection of named parameter matrices. Copyable: a target network is a copy.
class ParamStore {
 public:
  /// Registers a new entry and returns its index. Names are unique; shapes are fixed from here on.
  Index add(std::string name, Matrix init);

  Index size() const { return static_cast<Index>(values_.size()); }
  Index index_of(std::string_view name) const;
  bool contains(std::string_view name) const;
  const std::string& name(Index i) const { return names_[static_cast<std::size_t>(i)]; }
  const Matrix& value(Index i) const { return values_[static_cast<std::size_t>(i)]; }
  const Matrix& value(std::string_view name) const { return value(index_of(name)); }

  /// In-place access; the Ref cannot resize the entry.
  Eigen::Ref<Matrix> mutable_value(Index i) { return values_[static_cast<std::size_t>(i)]; }
  void set_value(Index i, const Matrix& v);

  /// Number of scalars across all entries.
  Index total_size() const;
  Vector flatten() const;
  void assign(const Vector& flat);

  long step() const { return step_; }
  void set_step(long s) { step_ = s; }
  void advance_step() { ++step_; }

  bool same_layout(const ParamStore& other) const;

  /// this <- rate * source + (1 - rate) * this, entrywise.
  void interpolate_from(const ParamStore& source, double rate);

 private:
  std::vector<std::string> names_;
  std::vector<Matrix> values_;
  long step_ = 0;
};

/// One gradient matrix per store entry, in store order.
using Gradients = std::vector<Matrix>;

Gradients zero_gradients(const ParamStore& store);
Vector flatten(const Gradients& grads);

}  // namespace planval::ad
