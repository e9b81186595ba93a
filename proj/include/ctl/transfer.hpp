#pragma once

#include <cstdint>
#include <string>
#include <variant>

#include "ctl/checkpoint.hpp"
#include "ctl/nn.hpp"

namespace ctl {

// The four initialization regimes. FineTune and OnlyHead build identical
// parameters (pre-trained body, freshly drawn head); they differ only in
// which tensors stay trainable.
struct ScratchInit {
  std::uint64_t seed = 0;
};
struct FineTuneInit {
  Checkpoint source;
  std::uint64_t head_seed = 0;
};
struct OnlyHeadInit {
  Checkpoint source;
  std::uint64_t head_seed = 0;
};
struct HybridInit {
  Checkpoint body;
  Checkpoint head;
};

using InitSpec = std::variant<ScratchInit, FineTuneInit, OnlyHeadInit, HybridInit>;

inline std::string regime_name(const InitSpec& spec) {
  struct Visitor {
    std::string operator()(const ScratchInit&) const { return "scratch"; }
    std::string operator()(const FineTuneInit&) const { return "finetune"; }
    std::string operator()(const OnlyHeadInit&) const { return "onlyhead"; }
    std::string operator()(const HybridInit&) const { return "hybrid"; }
  };
  return std::visit(Visitor{}, spec);
}

namespace detail {

inline void copy_body(NetworkParams& dst, const NetworkParams& src) {
  dst.conv1_w = src.conv1_w;
  dst.conv1_b = src.conv1_b;
  dst.conv2_w = src.conv2_w;
  dst.conv2_b = src.conv2_b;
  dst.fc1_w = src.fc1_w;
  dst.fc1_b = src.fc1_b;
}

inline void copy_head(NetworkParams& dst, const NetworkParams& src) {
  dst.head_w = src.head_w;
  dst.head_b = src.head_b;
}

}  // namespace detail

inline std::pair<NetworkParams, TrainableMask> materialize(const InitSpec& spec) {
  struct Visitor {
    std::pair<NetworkParams, TrainableMask> operator()(const ScratchInit& s) const {
      return {init_params(s.seed), TrainableMask::all()};
    }
    std::pair<NetworkParams, TrainableMask> operator()(const FineTuneInit& s) const {
      NetworkParams p = s.source.params;
      reinit_head(p, s.head_seed);
      return {std::move(p), TrainableMask::all()};
    }
    std::pair<NetworkParams, TrainableMask> operator()(const OnlyHeadInit& s) const {
      NetworkParams p = s.source.params;
      reinit_head(p, s.head_seed);
      return {std::move(p), TrainableMask::head_only()};
    }
    std::pair<NetworkParams, TrainableMask> operator()(const HybridInit& s) const {
      NetworkParams p;
      detail::copy_body(p, s.body.params);
      detail::copy_head(p, s.head.params);
      return {std::move(p), TrainableMask::all()};
    }
  };
  return std::visit(Visitor{}, spec);
}

// New checkpoint with the body tensors of `body` and the head tensors of
// `head`; metadata records both provenances. Both inputs have already
// passed shape validation during load, so composition cannot mismatch.
inline Checkpoint compose_hybrid(const Checkpoint& body, const Checkpoint& head) {
  Checkpoint out;
  detail::copy_body(out.params, body.params);
  detail::copy_head(out.params, head.params);
  out.set_meta("regime", "hybrid-compose");
  out.set_meta("body_source_variant", body.meta("variant"));
  out.set_meta("body_source_seed", body.meta("seed"));
  out.set_meta("head_source_variant", head.meta("variant"));
  out.set_meta("head_source_seed", head.meta("seed"));
  return out;
}

}  // namespace ctl
