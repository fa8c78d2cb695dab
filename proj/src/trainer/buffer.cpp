#include "planval/trainer/buffer.hpp"

namespace planval::trainer {

SegmentBuffer::SegmentBuffer(Index capacity, Index obs_dim, Index act_dim, actor::DataSource source)
    : capacity_(capacity), source_(source) {
  if (capacity < 1) throw PreconditionError("SegmentBuffer: capacity must be positive");
  s_.resize(capacity, obs_dim);
  a_.resize(capacity, act_dim);
  s_next_.resize(capacity, obs_dim);
  r_.resize(capacity);
  seg_.resize(static_cast<std::size_t>(capacity));
  pos_.resize(static_cast<std::size_t>(capacity));
  term_.resize(static_cast<std::size_t>(capacity));
}

void SegmentBuffer::add(const Vector& s, const Vector& a, double r, const Vector& s_next, bool terminal,
                        bool segment_end) {
  if (s.size() != obs_dim() || s_next.size() != obs_dim() || a.size() != act_dim())
    throw ShapeError("SegmentBuffer::add: transition width");
  if (!s.allFinite() || !a.allFinite() || !s_next.allFinite() || !std::isfinite(r))
    throw NumericError("SegmentBuffer::add: non-finite transition");
  Index row;
  if (size_ < capacity_) {
    row = slot(size_);
    ++size_;
  } else {
    row = head_;
    head_ = (head_ + 1) % capacity_;
  }
  s_.row(row) = s.transpose();
  a_.row(row) = a.transpose();
  s_next_.row(row) = s_next.transpose();
  r_(row) = r;
  seg_[static_cast<std::size_t>(row)] = current_segment_;
  pos_[static_cast<std::size_t>(row)] = current_pos_++;
  term_[static_cast<std::size_t>(row)] = terminal;
  if (segment_end || terminal) {
    ++current_segment_;
    current_pos_ = 0;
  }
}

void SegmentBuffer::add_rollouts(const model::BranchedRollouts& r) {
  if (current_pos_ != 0) {
    ++current_segment_;
    current_pos_ = 0;
  }
  for (Index i = 0; i < r.count(); ++i)
    for (Index t = 0; t < r.length(); ++t) {
      const auto ts = static_cast<std::size_t>(t);
      add(r.states[ts].row(i).transpose(), r.actions[ts].row(i).transpose(), r.rewards[ts](i),
          r.states[ts + 1].row(i).transpose(), false, t + 1 == r.length());
    }
}

void SegmentBuffer::clear() {
  head_ = 0;
  size_ = 0;
  ++current_segment_;
  current_pos_ = 0;
}

bool SegmentBuffer::window(Index i, Index k, int* done_within) const {
  if (i < 0 || k < 1 || i >= size_) return false;
  const long seg = segment_id(i);
  const int pos = position(i);
  for (Index j = 0; j < k; ++j) {
    if (i + j >= size_) return false;
    if (segment_id(i + j) != seg || position(i + j) != pos + j) return false;
    if (terminal(i + j)) {
      if (done_within) *done_within = static_cast<int>(j);
      return true;
    }
  }
  if (done_within) *done_within = -1;
  return true;
}

critic::SegmentBatch SegmentBuffer::windows_at(const std::vector<Index>& starts, Index k) const {
  const auto n = static_cast<Index>(starts.size());
  critic::SegmentBatch b;
  b.s0.resize(n, obs_dim());
  b.actions = Matrix::Zero(n, k * act_dim());
  b.rewards = Matrix::Zero(n, k);
  b.s_k.resize(n, obs_dim());
  b.done_within.resize(starts.size());
  for (Index row = 0; row < n; ++row) {
    const Index i = starts[static_cast<std::size_t>(row)];
    int dw = -1;
    if (!window(i, k, &dw)) throw PreconditionError("SegmentBuffer: no k-window starts at " + std::to_string(i));
    b.done_within[static_cast<std::size_t>(row)] = dw;
    b.s0.row(row) = s_.row(slot(i));
    const Index last = dw >= 0 ? dw : k - 1;
    for (Index j = 0; j <= last; ++j) {
      const Index sl = slot(i + j);
      b.actions.block(row, j * act_dim(), 1, act_dim()) = a_.row(sl);
      b.rewards(row, j) = r_(sl);
    }
    b.s_k.row(row) = s_next_.row(slot(i + last));
  }
  return b;
}

critic::SegmentBatch SegmentBuffer::sample_windows(Index n, Index k, Rng& rng) const {
  if (size_ == 0) throw CapacityError("SegmentBuffer: empty");
  std::vector<Index> starts;
  starts.reserve(static_cast<std::size_t>(n));
  long misses = 0;
  while (static_cast<Index>(starts.size()) < n) {
    const Index i = uniform_index(size_, rng);
    if (window(i, k)) {
      starts.push_back(i);
      misses = 0;
    } else if (++misses > 10000) {
      throw CapacityError("SegmentBuffer: no valid window of length " + std::to_string(k));
    }
  }
  return windows_at(starts, k);
}

actor::StateBatch SegmentBuffer::sample_states(Index n, Rng& rng) const {
  if (size_ == 0) throw CapacityError("SegmentBuffer: empty");
  Matrix obs(n, obs_dim());
  for (Index row = 0; row < n; ++row) obs.row(row) = s_.row(slot(uniform_index(size_, rng)));
  return {std::move(obs), source_};
}

model::TransitionBatch SegmentBuffer::transitions() const {
  model::TransitionBatch b;
  b.s.resize(size_, obs_dim());
  b.a.resize(size_, act_dim());
  b.r.resize(size_);
  b.s_next.resize(size_, obs_dim());
  b.done.resize(static_cast<std::size_t>(size_));
  for (Index i = 0; i < size_; ++i) {
    const Index sl = slot(i);
    b.s.row(i) = s_.row(sl);
    b.a.row(i) = a_.row(sl);
    b.r(i) = r_(sl);
    b.s_next.row(i) = s_next_.row(sl);
    b.done[static_cast<std::size_t>(i)] = term_[static_cast<std::size_t>(sl)];
  }
  return b;
}

Matrix SegmentBuffer::states() const {
  Matrix out(size_, obs_dim());
  for (Index i = 0; i < size_; ++i) out.row(i) = s_.row(slot(i));
  return out;
}

}  // namespace planval::trainer
