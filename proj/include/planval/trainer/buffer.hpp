#pragma once

#include "planval/actor/update.hpp"
#include "planval/critic/critic.hpp"
#include "planval/model/model.hpp"

namespace planval::trainer {

/// Ring buffer of transitions grouped into segments (episodes, or single model rollouts).
/// k-windows never span two segments; a termination inside a window ends it through done_within.
class SegmentBuffer {
 public:
  SegmentBuffer(Index capacity, Index obs_dim, Index act_dim, actor::DataSource source);

  /// Appends to the current segment; `segment_end` closes it after this transition.
  void add(const Vector& s, const Vector& a, double r, const Vector& s_next, bool terminal, bool segment_end);
  /// Each rollout row becomes its own segment.
  void add_rollouts(const model::BranchedRollouts& rollouts);
  void clear();

  Index size() const { return size_; }
  Index capacity() const { return capacity_; }
  actor::DataSource source() const { return source_; }
  Index obs_dim() const { return s_.cols(); }
  Index act_dim() const { return a_.cols(); }

  /// Window of length k starting at logical position i (0 = oldest). Returns false if none starts there.
  bool window(Index i, Index k, int* done_within = nullptr) const;
  /// Uniform over valid window starts (rejection sampling). CapacityError if no valid window is found.
  critic::SegmentBatch sample_windows(Index n, Index k, Rng& rng) const;
  /// Windows at the given logical starts; PreconditionError if any is invalid.
  critic::SegmentBatch windows_at(const std::vector<Index>& starts, Index k) const;
  /// Observations s of n uniformly drawn transitions.
  actor::StateBatch sample_states(Index n, Rng& rng) const;
  /// All stored transitions, oldest first.
  model::TransitionBatch transitions() const;
  /// The stored start observations, oldest first.
  Matrix states() const;

  /// Logical position -> storage row.
  Index slot(Index i) const { return (head_ + i) % capacity_; }
  long segment_id(Index i) const { return seg_[static_cast<std::size_t>(slot(i))]; }
  int position(Index i) const { return pos_[static_cast<std::size_t>(slot(i))]; }
  bool terminal(Index i) const { return term_[static_cast<std::size_t>(slot(i))]; }

 private:
  Index capacity_;
  actor::DataSource source_;
  Matrix s_, a_, s_next_;
  Vector r_;
  std::vector<long> seg_;
  std::vector<int> pos_;
  std::vector<bool> term_;
  Index head_ = 0, size_ = 0;
  long current_segment_ = 0;
  int current_pos_ = 0;
};

}  // namespace planval::trainer
