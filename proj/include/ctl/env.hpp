#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

#include "ctl/rng.hpp"

namespace ctl {

inline constexpr int kGridSize = 21;
inline constexpr int kTopRow = kGridSize - 1;
inline constexpr int kFrameCells = kGridSize * kGridSize;
inline constexpr int kStackFrames = 4;
inline constexpr int kObsValues = kStackFrames * kFrameCells;
inline constexpr int kNumActions = 3;

enum class Variant { V0, V1, V2, V3, V4 };
enum class Action : int { Left = 0, Stay = 1, Right = 2 };

// Per-variant rules. Only the five canonical configurations are
// constructible; everything else goes through make().
struct VariantConfig {
  Variant id;
  int paddle_width;
  bool mirrored;
  bool noisy_background;
  int streak_target;
  int grid_size;

  static VariantConfig make(Variant v) {
    switch (v) {
      case Variant::V0: return {v, 5, false, false, 1};
      case Variant::V1: return {v, 2, false, false, 1};
      case Variant::V2: return {v, 5, false, true, 1};
      case Variant::V3: return {v, 5, true, false, 1};
      case Variant::V4: return {v, 5, false, false, 5};
    }
    throw std::invalid_argument("unknown variant");
  }

  static std::optional<Variant> parse_variant(std::string_view name) {
    if (name == "v0" || name == "V0") return Variant::V0;
    if (name == "v1" || name == "V1") return Variant::V1;
    if (name == "v2" || name == "V2") return Variant::V2;
    if (name == "v3" || name == "V3") return Variant::V3;
    if (name == "v4" || name == "V4") return Variant::V4;
    return std::nullopt;
  }

  std::string_view name() const {
    switch (id) {
      case Variant::V0: return "v0";
      case Variant::V1: return "v1";
      case Variant::V2: return "v2";
      case Variant::V3: return "v3";
      case Variant::V4: return "v4";
    }
    return "?";
  }

 private:
  VariantConfig(Variant v, int width, bool mirror, bool noisy, int streak)
      : id(v), paddle_width(width), mirrored(mirror), noisy_background(noisy),
        streak_target(streak), grid_size(kGridSize) {}
};

// Row 0 is the paddle row at the bottom, row 20 the spawn row at the top.
// The ball drops one row per step; terminal states are exactly the states
// with ball_row == 0.
struct GridState {
  int ball_row = kTopRow;
  int ball_col = 0;
  int ball_vx = 0;
  int paddle_center = kGridSize / 2;
  int streak = 0;
  std::int64_t step_count = 0;
  Pcg32 rng;

  friend bool operator==(const GridState&, const GridState&) = default;
};

struct Frame {
  std::array<std::uint8_t, kFrameCells> pixels{};

  std::uint8_t& at(int row, int col) { return pixels[row * kGridSize + col]; }
  std::uint8_t at(int row, int col) const { return pixels[row * kGridSize + col]; }

  friend bool operator==(const Frame&, const Frame&) = default;
};

// Last four frames, oldest first, each normalized by 255.
struct Observation {
  std::array<float, kObsValues> values{};

  friend bool operator==(const Observation&, const Observation&) = default;
};

struct StepResult {
  float reward = 0.0f;
  bool terminal = false;
  bool drop_resolved = false;  // ball reached the paddle row this step
  bool drop_caught = false;
};

inline int paddle_lo(int center, int width) { return center - (width - 1) / 2; }
inline int paddle_hi(int center, int width) { return paddle_lo(center, width) + width - 1; }

inline int clamp_paddle_center(int center, int width) {
  const int lo = (width - 1) / 2;
  const int hi = kTopRow - (width - 1 - (width - 1) / 2);
  if (center < lo) return lo;
  if (center > hi) return hi;
  return center;
}

inline bool paddle_covers(int center, int width, int col) {
  return col >= paddle_lo(center, width) && col <= paddle_hi(center, width);
}

inline GridState make_initial_state(const VariantConfig& cfg, std::uint64_t seed) {
  GridState s;
  s.rng = Pcg32::seeded(seed);
  s.ball_row = kTopRow;
  s.ball_col = static_cast<int>(s.rng.below(kGridSize));
  s.ball_vx = s.rng.range(-2, 2);
  s.paddle_center = kGridSize / 2;
  s.streak = 0;
  s.step_count = 0;
  (void)cfg;
  return s;
}

// Advances the physics one tick: paddle first, then the ball, then the
// drop resolution when the ball reaches row 0. Consumes state RNG only
// when a fresh ball spawns (streak variants).
inline StepResult step(GridState& s, Action a, const VariantConfig& cfg) {
  if (s.ball_row == 0) throw std::logic_error("step() called on a terminal state");

  const int delta = a == Action::Left ? -1 : (a == Action::Right ? 1 : 0);
  s.paddle_center = clamp_paddle_center(s.paddle_center + delta, cfg.paddle_width);

  s.ball_row -= 1;
  int u = s.ball_col + s.ball_vx;
  if (u < 0) {
    u = -u;
    s.ball_vx = -s.ball_vx;
  } else if (u > kTopRow) {
    u = 2 * kTopRow - u;
    s.ball_vx = -s.ball_vx;
  }
  s.ball_col = u;
  s.step_count += 1;

  StepResult r;
  if (s.ball_row == 0) {
    r.drop_resolved = true;
    r.drop_caught = paddle_covers(s.paddle_center, cfg.paddle_width, s.ball_col);
    if (cfg.streak_target == 1) {
      r.terminal = true;
      r.reward = r.drop_caught ? 1.0f : 0.0f;
    } else if (!r.drop_caught) {
      r.terminal = true;
    } else {
      s.streak += 1;
      if (s.streak == cfg.streak_target) {
        r.terminal = true;
        r.reward = 1.0f;
      } else {
        s.ball_row = kTopRow;
        s.ball_col = static_cast<int>(s.rng.below(kGridSize));
        s.ball_vx = s.rng.range(-2, 2);
      }
    }
  }
  return r;
}

// Draws the state. Objects are 255; V2 resamples every background cell
// from the state RNG on each call (441 draws, object cells overwritten).
// Mirrored variants flip rows, putting the paddle in the top image row.
inline Frame render(GridState& s, const VariantConfig& cfg) {
  Frame f;
  if (cfg.noisy_background) {
    for (auto& px : f.pixels) px = static_cast<std::uint8_t>(s.rng.below(256));
  }
  const auto image_row = [&cfg](int state_row) {
    return cfg.mirrored ? state_row : kTopRow - state_row;
  };
  const int pr = image_row(0);
  for (int c = paddle_lo(s.paddle_center, cfg.paddle_width);
       c <= paddle_hi(s.paddle_center, cfg.paddle_width); ++c) {
    f.at(pr, c) = 255;
  }
  f.at(image_row(s.ball_row), s.ball_col) = 255;
  return f;
}

// Column where the ball will cross row 0, in closed form: unfold the
// trajectory to u = col + vx * row and reflect through the period-40
// triangular map. Must agree with stepping the physics row times.
inline int landing_column(const GridState& s) {
  if (s.ball_row < 1) throw std::logic_error("landing_column() needs ball_row >= 1");
  const long u = s.ball_col + static_cast<long>(s.ball_vx) * s.ball_row;
  const long period = 2 * kTopRow;
  long m = ((u % period) + period) % period;
  if (m > kTopRow) m = period - m;
  return static_cast<int>(m);
}

// Moves the paddle center one cell toward the landing column. Starting
// from the center of the grid this catches every ball on every variant.
inline Action oracle_policy(const GridState& s) {
  const int target = landing_column(s);
  if (target < s.paddle_center) return Action::Left;
  if (target > s.paddle_center) return Action::Right;
  return Action::Stay;
}

// One playable instance: physics state plus the stacked-frame observation.
// Value-like; copy freely, no shared state.
class Environment {
 public:
  explicit Environment(VariantConfig cfg) : cfg_(cfg) {}

  const Observation& reset(std::uint64_t seed) {
    state_ = make_initial_state(cfg_, seed);
    terminal_ = false;
    const Frame f = render(state_, cfg_);
    for (int i = 0; i < kStackFrames; ++i) push_frame(f, i == 0);
    return obs_;
  }

  StepResult step(Action a) {
    if (terminal_) throw std::logic_error("step() called on a finished episode");
    const StepResult r = ctl::step(state_, a, cfg_);
    terminal_ = r.terminal;
    push_frame(render(state_, cfg_), false);
    return r;
  }

  const Observation& observation() const { return obs_; }
  const GridState& state() const { return state_; }
  const VariantConfig& config() const { return cfg_; }
  bool terminal() const { return terminal_; }

 private:
  void push_frame(const Frame& f, bool fill_all) {
    if (fill_all) {
      for (int k = 0; k < kStackFrames; ++k) write_slot(k, f);
    } else {
      for (int k = 0; k + 1 < kStackFrames; ++k) {
        std::copy(obs_.values.begin() + (k + 1) * kFrameCells,
                  obs_.values.begin() + (k + 2) * kFrameCells,
                  obs_.values.begin() + k * kFrameCells);
      }
      write_slot(kStackFrames - 1, f);
    }
  }

  void write_slot(int slot, const Frame& f) {
    float* dst = obs_.values.data() + slot * kFrameCells;
    for (int i = 0; i < kFrameCells; ++i) dst[i] = static_cast<float>(f.pixels[i]) / 255.0f;
  }

  VariantConfig cfg_;
  GridState state_;
  Observation obs_;
  bool terminal_ = true;
};

// Binary PGM (P5), 21x21, maxval 255.
inline void write_pgm(const Frame& f, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << "P5\n" << kGridSize << " " << kGridSize << "\n255\n";
  out.write(reinterpret_cast<const char*>(f.pixels.data()), f.pixels.size());
  if (!out) throw std::runtime_error("failed writing " + path);
}

}  // namespace ctl
