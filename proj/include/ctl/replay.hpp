#pragma once

#include <array>
#include <cassert>
#include <cmath>
#include <cstdint>
#include <vector>

#include "ctl/env.hpp"
#include "ctl/rng.hpp"

namespace ctl {

// One (s, a, r, s', done) sample. Frames are stored as raw bytes: the
// observation values are exactly frame/255, so the encoding is lossless,
// and s' shares its first three frames with s, so only the newest frame
// of s' is kept. A filled buffer of 400k transitions stays under 1 GB.
struct StoredTransition {
  std::array<std::uint8_t, kObsValues> obs;
  std::array<std::uint8_t, kFrameCells> next_frame;
  std::uint8_t action = 0;
  std::uint8_t reward = 0;
  bool done = false;
};

class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity) : capacity_(capacity) {}

  std::size_t size() const { return slots_.size(); }
  std::size_t capacity() const { return capacity_; }

  void push(const Observation& s, Action a, float r, const Observation& s_next, bool done) {
    StoredTransition t;
    for (int i = 0; i < kObsValues; ++i) {
      t.obs[i] = static_cast<std::uint8_t>(std::lround(s.values[i] * 255.0f));
    }
    const float* newest = s_next.values.data() + (kStackFrames - 1) * kFrameCells;
    for (int i = 0; i < kFrameCells; ++i) {
      t.next_frame[i] = static_cast<std::uint8_t>(std::lround(newest[i] * 255.0f));
    }
    assert([&] {  // s' must be s shifted by one frame (trajectory order)
      for (int i = 0; i < (kStackFrames - 1) * kFrameCells; ++i) {
        if (s.values[i + kFrameCells] != s_next.values[i]) return false;
      }
      return true;
    }());
    t.action = static_cast<std::uint8_t>(a);
    t.reward = static_cast<std::uint8_t>(std::lround(r));
    t.done = done;

    if (slots_.size() < capacity_) {
      slots_.push_back(t);
    } else {
      slots_[cursor_] = t;  // overwrite oldest first
    }
    cursor_ = (cursor_ + 1) % capacity_;
  }

  const StoredTransition& at(std::size_t i) const { return slots_[i]; }

  // Uniform over filled slots, with replacement.
  std::size_t sample_index(Pcg32& rng) const {
    return rng.below(static_cast<std::uint32_t>(slots_.size()));
  }

  // Decodes observation i into 1764 normalized floats.
  void write_obs(std::size_t i, float* dst) const {
    const auto& t = slots_[i];
    for (int j = 0; j < kObsValues; ++j) dst[j] = static_cast<float>(t.obs[j]) / 255.0f;
  }

  // Decodes the successor observation: frames 1..3 of s plus the stored
  // newest frame.
  void write_next_obs(std::size_t i, float* dst) const {
    const auto& t = slots_[i];
    for (int j = kFrameCells; j < kObsValues; ++j) {
      dst[j - kFrameCells] = static_cast<float>(t.obs[j]) / 255.0f;
    }
    float* tail = dst + (kStackFrames - 1) * kFrameCells;
    for (int j = 0; j < kFrameCells; ++j) {
      tail[j] = static_cast<float>(t.next_frame[j]) / 255.0f;
    }
  }

 private:
  std::size_t capacity_;
  std::size_t cursor_ = 0;
  std::vector<StoredTransition> slots_;
};

}  // namespace ctl
