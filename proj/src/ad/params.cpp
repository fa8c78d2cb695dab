#include "planval/ad/params.hpp"

#include <algorithm>

namespace planval::ad {

Index ParamStore::add(std::string name, Matrix init) {
  if (contains(name)) throw PreconditionError("ParamStore: duplicate entry '" + name + "'");
  if (!init.allFinite()) throw NumericError("ParamStore: non-finite initial value for '" + name + "'");
  names_.push_back(std::move(name));
  values_.push_back(std::move(init));
  return size() - 1;
}

Index ParamStore::index_of(std::string_view name) const {
  const auto it = std::find(names_.begin(), names_.end(), name);
  if (it == names_.end()) throw PreconditionError("ParamStore: no entry named '" + std::string(name) + "'");
  return static_cast<Index>(it - names_.begin());
}

bool ParamStore::contains(std::string_view name) const {
  return std::find(names_.begin(), names_.end(), name) != names_.end();
}

void ParamStore::set_value(Index i, const Matrix& v) {
  auto& dst = values_[static_cast<std::size_t>(i)];
  if (v.rows() != dst.rows() || v.cols() != dst.cols())
    throw ShapeError("ParamStore: shape change for '" + name(i) + "'");
  dst = v;
}

Index ParamStore::total_size() const {
  Index n = 0;
  for (const auto& v : values_) n += v.size();
  return n;
}

Vector ParamStore::flatten() const {
  Vector out(total_size());
  Index pos = 0;
  for (const auto& v : values_) {
    out.segment(pos, v.size()) = v.reshaped();
    pos += v.size();
  }
  return out;
}

void ParamStore::assign(const Vector& flat) {
  if (flat.size() != total_size()) throw ShapeError("ParamStore::assign: length mismatch");
  Index pos = 0;
  for (auto& v : values_) {
    v.reshaped() = flat.segment(pos, v.size());
    pos += v.size();
  }
}

bool ParamStore::same_layout(const ParamStore& other) const {
  if (other.size() != size()) return false;
  for (Index i = 0; i < size(); ++i) {
    if (other.name(i) != name(i) || other.value(i).rows() != value(i).rows() ||
        other.value(i).cols() != value(i).cols())
      return false;
  }
  return true;
}

void ParamStore::interpolate_from(const ParamStore& source, double rate) {
  if (!same_layout(source)) throw ShapeError("ParamStore::interpolate_from: layouts differ");
  for (Index i = 0; i < size(); ++i) {
    auto& dst = values_[static_cast<std::size_t>(i)];
    if (rate == 1.0) {
      dst = source.value(i);
    } else {
      dst += rate * (source.value(i) - dst);
    }
  }
}

Gradients zero_gradients(const ParamStore& store) {
  Gradients g;
  g.reserve(static_cast<std::size_t>(store.size()));
  for (Index i = 0; i < store.size(); ++i) g.push_back(Matrix::Zero(store.value(i).rows(), store.value(i).cols()));
  return g;
}

Vector flatten(const Gradients& grads) {
  Index n = 0;
  for (const auto& g : grads) n += g.size();
  Vector out(n);
  Index pos = 0;
  for (const auto& g : grads) {
    out.segment(pos, g.size()) = g.reshaped();
    pos += g.size();
  }
  return out;
}

}  // namespace planval::ad
