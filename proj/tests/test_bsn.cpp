#include <doctest.h>

#include <algorithm>
#include <set>

#include "fbi/bsn.hpp"
#include "fbi/layers.hpp"
#include "gradcheck.hpp"

using namespace fbi;
using namespace fbi::testutil;

namespace {

LayerSpec ring(int s, bool center, Index cin, Index cout) {
  LayerSpec l;
  l.taps = {{s, 0}, {-s, 0}, {0, s}, {0, -s}, {s, s}, {s, -s}, {-s, s}, {-s, -s}};
  if (center) l.taps.push_back({0, 0});
  l.in_channels = cin;
  l.out_channels = cout;
  return l;
}

// Empirical influence set: gradient support of the center output pixel.
std::set<std::pair<int, int>> jacobian_support(const BsnNet& net, Index side,
                                               std::uint64_t seed) {
  std::set<std::pair<int, int>> support;
  const Index cy = side / 2, cx = side / 2;
  for (Index ch = 0; ch < 2; ++ch) {
    Tensor z = Tensor::leaf({1, 1, side, side}, random_array(side * side, seed, 0.1, 0.9), true);
    Tensor out = net.forward(z);
    backward(element(out, ch * side * side + cy * side + cx));
    const ArrayX& g = z.grad();
    for (Index y = 0; y < side; ++y)
      for (Index x = 0; x < side; ++x)
        if (g[y * side + x] != 0.0) support.insert({static_cast<int>(y - cy),
                                                    static_cast<int>(x - cx)});
  }
  return support;
}

}  // namespace

TEST_CASE("single masked 3x3 layer displacement set") {
  NetConfig cfg;
  cfg.width = 4;
  cfg.head_hidden = 4;
  cfg.layers.push_back(ring(1, false, 1, 4));
  DisplacementSet d = displacement_set(cfg);
  CHECK(d.size() == 8);
  CHECK_FALSE(d.contains({0, 0}));
  CHECK(d.receptive_field() == std::pair<Index, Index>{3, 3});
}

TEST_CASE("two stacked masked layers reach the center") {
  NetConfig cfg;
  cfg.width = 4;
  cfg.head_hidden = 4;
  cfg.layers.push_back(ring(1, false, 1, 4));
  cfg.layers.push_back(ring(1, false, 4, 4));
  DisplacementSet d = displacement_set(cfg);
  CHECK(d.contains({0, 0}));
}

TEST_CASE("the sequential odd/even/dilation-3 stack is refuted with a path") {
  DisplacementSet d = displacement_set(paper_literal());
  const Displacement* hit = d.find({0, 0});
  REQUIRE(hit != nullptr);
  CHECK(format_path(hit->path) == "(1,0) + (2,0) + (-3,0)");
  CHECK_THROWS_WITH_AS(BsnNet(paper_literal(), 1),
                       "blind-spot violation: offset sum (1,0) + (2,0) + (-3,0) reaches (0,0)",
                       Error);
}

TEST_CASE("default net is accepted with the documented receptive field") {
  NetConfig cfg = fbi_safe_17();
  DisplacementSet d = displacement_set(cfg);
  CHECK_FALSE(d.contains({0, 0}));
  CHECK(d.receptive_field() == std::pair<Index, Index>{119, 119});
  CHECK_NOTHROW(BsnNet(cfg, 1));
}

TEST_CASE("malformed configs are rejected") {
  NetConfig empty;
  CHECK_THROWS_AS(displacement_set(empty), Error);

  NetConfig cfg;
  cfg.layers.push_back(ring(1, false, 1, 4));
  cfg.layers.push_back(ring(2, true, 8, 4));  // channel mismatch
  CHECK_THROWS_AS(displacement_set(cfg), Error);

  NetConfig dup;
  dup.layers.push_back(ring(1, false, 1, 4));
  dup.layers[0].taps.push_back({1, 0});
  CHECK_THROWS_AS(displacement_set(dup), Error);

  NetConfig back;
  back.layers.push_back(ring(1, false, 1, 4));
  back.layers.push_back(ring(2, true, 4, 4));
  back.residuals.push_back({ResidualTag::Inner, 2, 1});  // not forward
  CHECK_THROWS_AS(displacement_set(back), Error);
}

TEST_CASE("residual edges only grow the set and keep the blind spot") {
  NetConfig base;
  base.width = 4;
  base.head_hidden = 4;
  base.layers.push_back(ring(1, false, 1, 4));
  base.layers.push_back(ring(2, true, 4, 4));
  base.layers.push_back(ring(2, true, 4, 4));
  DisplacementSet d0 = displacement_set(base);

  NetConfig with = base;
  with.residuals.push_back({ResidualTag::Outer, 1, kResidualToHead});
  DisplacementSet d1 = displacement_set(with);
  CHECK(d1.size() >= d0.size());
  for (const Displacement& d : d0.offsets()) CHECK(d1.contains(d.off));
  CHECK_FALSE(d1.contains({0, 0}));
}

TEST_CASE("parity safety: odd first layer, even later layers") {
  CounterRng rng(77, 5);
  for (int rep = 0; rep < 50; ++rep) {
    NetConfig cfg;
    cfg.width = 2;
    cfg.head_hidden = 2;
    LayerSpec l1;
    l1.in_channels = 1;
    l1.out_channels = 2;
    while (l1.taps.size() < 4) {
      int dy = static_cast<int>(rng.next_u64() % 7) - 3;
      int dx = static_cast<int>(rng.next_u64() % 7) - 3;
      if ((dy % 2 == 0 && dx % 2 == 0) ||
          std::count(l1.taps.begin(), l1.taps.end(), TapOffset{dy, dx})) {
        continue;
      }
      l1.taps.push_back({dy, dx});
    }
    cfg.layers.push_back(l1);
    const int depth = 1 + static_cast<int>(rng.next_u64() % 3);
    for (int k = 0; k < depth; ++k) {
      LayerSpec le;
      le.in_channels = 2;
      le.out_channels = 2;
      while (le.taps.size() < 3) {
        int dy = 2 * (static_cast<int>(rng.next_u64() % 5) - 2);
        int dx = 2 * (static_cast<int>(rng.next_u64() % 5) - 2);
        if (std::count(le.taps.begin(), le.taps.end(), TapOffset{dy, dx})) continue;
        le.taps.push_back({dy, dx});
      }
      cfg.layers.push_back(le);
    }
    CHECK_FALSE(displacement_set(cfg).contains({0, 0}));
  }
}

TEST_CASE("analyzer equals the autodiff Jacobian support on small nets") {
  CounterRng rng(31, 5);
  for (int rep = 0; rep < 8; ++rep) {
    NetConfig cfg;
    cfg.width = 2;
    cfg.head_hidden = 3;
    const int depth = 1 + static_cast<int>(rng.next_u64() % 4);
    Index cin = 1;
    for (int k = 0; k < depth; ++k) {
      LayerSpec l;
      l.in_channels = cin;
      l.out_channels = 2;
      cin = 2;
      const std::size_t want = 2 + rng.next_u64() % 3;
      while (l.taps.size() < want) {
        int dy = static_cast<int>(rng.next_u64() % 5) - 2;
        int dx = static_cast<int>(rng.next_u64() % 5) - 2;
        if (std::count(l.taps.begin(), l.taps.end(), TapOffset{dy, dx})) continue;
        l.taps.push_back({dy, dx});
      }
      l.has_prelu = rng.next_u64() % 2 == 0;
      cfg.layers.push_back(l);
    }
    if (depth >= 2 && rng.next_u64() % 2 == 0) cfg.rm_after.push_back(2);
    if (depth >= 3 && rng.next_u64() % 2 == 0) {
      cfg.residuals.push_back({ResidualTag::Inner, 1, 3});
    }
    BsnNet net = BsnNet::unchecked(cfg, 1000 + static_cast<std::uint64_t>(rep));

    DisplacementSet d = displacement_set(cfg);
    int reach = 0;
    std::set<std::pair<int, int>> expect;
    for (const Displacement& disp : d.offsets()) {
      expect.insert({disp.off.dy, disp.off.dx});
      reach = std::max({reach, std::abs(disp.off.dy), std::abs(disp.off.dx)});
    }
    const Index side = 2 * reach + 7;
    CHECK(jacobian_support(net, side, 500 + static_cast<std::uint64_t>(rep)) == expect);
  }
}

TEST_CASE("empirical check passes the default net and catches a leaky one") {
  BsnNet good(fbi_safe_17(), 3);
  BlindSpotReport ok = blind_spot_check(good, 50, 9);
  CHECK(ok.pass);
  CHECK(ok.failures == 0);

  NetConfig leaky;
  leaky.width = 4;
  leaky.head_hidden = 4;
  leaky.layers.push_back(ring(1, true, 1, 4));  // center tap present
  BsnNet bad = BsnNet::unchecked(leaky, 3);
  CHECK_FALSE(blind_spot_check(bad, 50, 9).pass);
}

TEST_CASE("residual module with a zeroed second conv is the identity") {
  CounterRng rng(5, stream::param_init);
  ResidualModule rm;
  rm.pre0 = make_prelu("t.pre0", 3);
  rm.c0 = make_dense_conv("t.c0", 3, 3, 1, 0, rng);
  rm.pre1 = make_prelu("t.pre1", 3);
  rm.c1 = make_dense_conv("t.c1", 3, 3, 1, 0, rng);
  rm.c1.w.tensor.mutable_array().setZero();
  rm.c1.b.tensor.mutable_array().setZero();
  Tensor x = Tensor::from_array({1, 3, 4, 4}, random_array(48, 61));
  ArrayX y = rm(x).array();
  for (Index i = 0; i < 48; ++i) CHECK(y[i] == x.array()[i]);
}

TEST_CASE("parameter counting") {
  NetConfig full;
  full.width = 1;
  full.head_hidden = 1;
  LayerSpec l;
  for (int dy = -1; dy <= 1; ++dy)
    for (int dx = -1; dx <= 1; ++dx) l.taps.push_back({dy, dx});
  l.in_channels = 1;
  l.out_channels = 1;
  l.has_prelu = false;
  full.layers.push_back(l);
  // 3x3 conv + bias = 10, plus the fixed 1x1 head stack (1->1->2): 2 + 1 + 4
  const Index head = (1 * 1 + 1) + 1 + (2 * 1 + 2);
  CHECK(count_parameters(full) == 10 + head);

  NetConfig masked = full;
  masked.layers[0].taps.erase(
      std::find(masked.layers[0].taps.begin(), masked.layers[0].taps.end(), TapOffset{0, 0}));
  CHECK(count_parameters(masked) == 9 + head);

  // default config: every parameter tensor accounted for
  NetConfig cfg = fbi_safe_17();
  BsnNet net(cfg, 1);
  Index total = 0;
  for (const Parameter& p : net.parameters()) total += p.tensor.numel();
  CHECK(count_parameters(cfg) == total);
}

TEST_CASE("config text round trip") {
  for (const NetConfig& cfg : {fbi_safe_17(), paper_literal()}) {
    NetConfig back = parse_net_config(serialize_net_config(cfg));
    CHECK(back.width == cfg.width);
    CHECK(back.head_hidden == cfg.head_hidden);
    REQUIRE(back.layers.size() == cfg.layers.size());
    for (std::size_t i = 0; i < cfg.layers.size(); ++i) {
      CHECK(back.layers[i].taps == cfg.layers[i].taps);
      CHECK(back.layers[i].in_channels == cfg.layers[i].in_channels);
      CHECK(back.layers[i].has_prelu == cfg.layers[i].has_prelu);
    }
    CHECK(back.rm_after == cfg.rm_after);
    REQUIRE(back.residuals.size() == cfg.residuals.size());
    for (std::size_t i = 0; i < cfg.residuals.size(); ++i) {
      CHECK(back.residuals[i].tag == cfg.residuals[i].tag);
      CHECK(back.residuals[i].from == cfg.residuals[i].from);
      CHECK(back.residuals[i].to == cfg.residuals[i].to);
    }
  }
  CHECK_THROWS_AS(parse_net_config("widt 32\n"), ConfigError);
  CHECK_THROWS_AS(parse_net_config("layer 1 2 maybe : (0,1)\n"), ConfigError);
}

TEST_CASE("shipped config files match the builtins") {
  CHECK(serialize_net_config(read_net_config(std::string(FBI_SOURCE_DIR) +
                                             "/configs/fbi-safe-17.cfg")) ==
        serialize_net_config(fbi_safe_17()));
  CHECK(serialize_net_config(read_net_config(std::string(FBI_SOURCE_DIR) +
                                             "/configs/paper-literal.cfg")) ==
        serialize_net_config(paper_literal()));
}

TEST_CASE("forward output shape and determinism") {
  NetConfig cfg;
  cfg.width = 4;
  cfg.head_hidden = 4;
  cfg.layers.push_back(ring(1, false, 1, 4));
  cfg.layers.push_back(ring(2, true, 4, 4));
  BsnNet a(cfg, 11), b(cfg, 11);
  Tensor z = Tensor::from_array({2, 1, 10, 10}, random_array(200, 71, 0, 1));
  Tensor ya = a.forward(z), yb = b.forward(z);
  CHECK(ya.shape() == Shape{2, 2, 10, 10});
  CHECK((ya.array() - yb.array()).abs().maxCoeff() == 0.0);
  CHECK_THROWS_AS(a.forward(Tensor::full({1, 2, 8, 8}, 0.5)), ShapeError);
}

TEST_CASE("fresh default net keeps the coefficient sigmoids responsive") {
  // Residual modules init as identities; without that, sixteen live branches
  // double the activation variance each and the head logits reach the
  // hundreds, pinning both sigmoids at exactly 0 or 1 with vanished
  // gradients. Saturated nets train to nothing, so the init scale is a
  // contract: logits of a fresh net on in-range input stay moderate.
  NoGradGuard off;
  for (std::uint64_t seed : {1, 41, 900}) {
    BsnNet net(fbi_safe_17(), seed);
    Tensor z = Tensor::from_array({1, 1, 48, 48}, random_array(48 * 48, 300 + seed, 0, 1));
    ArrayX logits = net.forward(z).array();
    CHECK(logits.abs().maxCoeff() < 30.0);
  }
}
