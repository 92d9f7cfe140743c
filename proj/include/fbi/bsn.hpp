#pragma once

#include "fbi/layers.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace fbi {

/// One masked spatial convolution: only the listed tap offsets carry weights.
struct LayerSpec {
  std::vector<TapOffset> taps;
  Index in_channels = 0;
  Index out_channels = 0;
  bool has_prelu = true;
};

enum class ResidualTag { Inner, Outer };

/// Skip connection adding layer `from`'s output to layer `to`'s output.
/// `to` == kResidualToHead adds into the pre-head features.
inline constexpr Index kResidualToHead = 0;
struct ResidualEdge {
  ResidualTag tag = ResidualTag::Inner;
  Index from = 0;  // 1-based spatial layer index
  Index to = kResidualToHead;
};

struct NetConfig {
  Index width = 32;
  std::vector<LayerSpec> layers;  // 1-based in edges and rm placements
  std::vector<Index> rm_after;    // residual module after these layers
  std::vector<ResidualEdge> residuals;
  Index head_hidden = 32;  // head is 1x1 width->head_hidden->2
};

struct PathStep {
  Index layer;
  TapOffset tap;
};

/// An input offset that can influence one output pixel, with one witness
/// chain of per-layer taps summing to it.
struct Displacement {
  TapOffset off;
  std::vector<PathStep> path;
};

class DisplacementSet {
 public:
  void insert(Displacement d);  // keeps the first witness for an offset
  bool contains(TapOffset off) const;
  const Displacement* find(TapOffset off) const;
  const std::vector<Displacement>& offsets() const { return offsets_; }
  Index size() const { return static_cast<Index>(offsets_.size()); }

  /// Bounding box extents (height, width); zero for an empty set.
  std::pair<Index, Index> receptive_field() const;

 private:
  std::vector<Displacement> offsets_;  // insertion-ordered
  std::map<std::pair<int, int>, std::size_t> index_;
};

/// Exact influence set of the output head: spatial layers contribute a
/// Minkowski sum with their taps, 1x1 convs and activations are identity,
/// residual edges contribute a set union.
DisplacementSet displacement_set(const NetConfig& cfg);

std::string format_path(const std::vector<PathStep>& path);

/// 1x1 residual module RM(x) = x + Conv(PReLU(Conv(PReLU(x)))).
struct ResidualModule {
  PReluLayer pre0;
  DenseConv c0;
  PReluLayer pre1;
  DenseConv c1;

  Tensor operator()(const Tensor& x) const { return x + c1(pre1(c0(pre0(x)))); }
};

/// Blind-spot network: masked tap convolutions with PReLU, optional residual
/// modules and skip edges, and a two-conv 1x1 head producing the two
/// coefficient logit channels.  Construction rejects any configuration whose
/// displacement set contains (0,0).
class BsnNet {
 public:
  BsnNet(NetConfig cfg, std::uint64_t seed);

  /// Skips the blind-spot validation. Exists so the empirical checker's
  /// failure detection can itself be tested against a leaky net.
  static BsnNet unchecked(NetConfig cfg, std::uint64_t seed);

  /// (N,1,H,W) -> logits (N,2,H,W).
  Tensor forward(const Tensor& z) const;

  std::vector<Parameter> parameters() const;
  const NetConfig& config() const { return cfg_; }

 private:
  struct Raw {};
  BsnNet(Raw, NetConfig cfg, std::uint64_t seed);

  struct TapConvLayer {
    Parameter w;  // (Cout,Cin,T)
    Parameter b;
    std::vector<TapOffset> taps;
  };

  NetConfig cfg_;
  std::vector<TapConvLayer> convs_;
  std::vector<PReluLayer> prelus_;  // aligned with layers; unused slot when has_prelu=false
  std::map<Index, ResidualModule> rms_;
  DenseConv head0_;
  PReluLayer head_prelu_;
  DenseConv head1_;
};

BsnNet build_net(const NetConfig& cfg, std::uint64_t seed);

struct BlindSpotReport {
  bool pass = false;
  Index trials = 0;
  Index failures = 0;
};

/// Empirical blind-spot test: perturb one random pixel by one of {+-1, +-100}
/// and require both logit channels at that pixel to be bitwise unchanged.
BlindSpotReport blind_spot_check(const BsnNet& net, Index trials, std::uint64_t seed,
                                 Index image_size = 12);

/// Exact count of scalar parameters a built net would carry (masked kernel
/// positions excluded by construction).
Index count_parameters(const NetConfig& cfg);

NetConfig parse_net_config(const std::string& text);
NetConfig read_net_config(const std::string& path);
std::string serialize_net_config(const NetConfig& cfg);

/// Default parity-safe 17-layer architecture (odd-offset first layer, even
/// taps after; receptive field 119x119).
NetConfig fbi_safe_17();
/// Sequential stack with the dilation-3 center-tapped third layer; kept as
/// analyzer-demo data.  Construction must reject it.
NetConfig paper_literal();

}  // namespace fbi
