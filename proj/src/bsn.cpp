#include "fbi/bsn.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace fbi {

void DisplacementSet::insert(Displacement d) {
  auto key = std::make_pair(d.off.dy, d.off.dx);
  if (index_.count(key)) return;
  index_[key] = offsets_.size();
  offsets_.push_back(std::move(d));
}

bool DisplacementSet::contains(TapOffset off) const { return index_.count({off.dy, off.dx}) > 0; }

const Displacement* DisplacementSet::find(TapOffset off) const {
  auto it = index_.find({off.dy, off.dx});
  return it == index_.end() ? nullptr : &offsets_[it->second];
}

std::pair<Index, Index> DisplacementSet::receptive_field() const {
  if (offsets_.empty()) return {0, 0};
  int ylo = offsets_[0].off.dy, yhi = ylo, xlo = offsets_[0].off.dx, xhi = xlo;
  for (const Displacement& d : offsets_) {
    ylo = std::min(ylo, d.off.dy);
    yhi = std::max(yhi, d.off.dy);
    xlo = std::min(xlo, d.off.dx);
    xhi = std::max(xhi, d.off.dx);
  }
  return {yhi - ylo + 1, xhi - xlo + 1};
}

std::string format_path(const std::vector<PathStep>& path) {
  std::string out;
  for (std::size_t i = 0; i < path.size(); ++i) {
    if (i) out += " + ";
    out += "(" + std::to_string(path[i].tap.dy) + "," + std::to_string(path[i].tap.dx) + ")";
  }
  return out;
}

namespace {

void validate_config(const NetConfig& cfg) {
  const Index L = static_cast<Index>(cfg.layers.size());
  if (L == 0) throw Error("net config: no spatial layers");
  for (Index k = 0; k < L; ++k) {
    const LayerSpec& l = cfg.layers[static_cast<std::size_t>(k)];
    if (l.taps.empty()) throw Error("net config: layer " + std::to_string(k + 1) + " has no taps");
    if (l.in_channels < 1 || l.out_channels < 1) {
      throw Error("net config: layer " + std::to_string(k + 1) + " has bad channel counts");
    }
    if (k > 0 && l.in_channels != cfg.layers[static_cast<std::size_t>(k - 1)].out_channels) {
      throw Error("net config: channel mismatch entering layer " + std::to_string(k + 1));
    }
    std::set<std::pair<int, int>> seen;
    for (const TapOffset& t : l.taps) {
      if (!seen.insert({t.dy, t.dx}).second) {
        throw Error("net config: duplicate tap in layer " + std::to_string(k + 1));
      }
    }
  }
  for (Index k : cfg.rm_after) {
    if (k < 1 || k > L) throw Error("net config: rm placement out of range");
  }
  for (const ResidualEdge& e : cfg.residuals) {
    if (e.from < 1 || e.from > L) throw Error("net config: residual source out of range");
    if (e.to != kResidualToHead && (e.to < 1 || e.to > L)) {
      throw Error("net config: residual target out of range");
    }
    if (e.to != kResidualToHead && e.from >= e.to) {
      throw Error("net config: residual edge (" + std::to_string(e.from) + " -> " +
                  std::to_string(e.to) + ") is not forward (cycle)");
    }
    Index to_ch = e.to == kResidualToHead ? cfg.layers.back().out_channels
                                          : cfg.layers[static_cast<std::size_t>(e.to - 1)].out_channels;
    if (cfg.layers[static_cast<std::size_t>(e.from - 1)].out_channels != to_ch) {
      throw Error("net config: residual edge channel mismatch");
    }
  }
  if (cfg.head_hidden < 1) throw Error("net config: bad head width");
}

}  // namespace

DisplacementSet displacement_set(const NetConfig& cfg) {
  validate_config(cfg);
  const Index L = static_cast<Index>(cfg.layers.size());
  std::vector<DisplacementSet> sets(static_cast<std::size_t>(L) + 1);
  sets[0].insert({{0, 0}, {}});

  for (Index k = 1; k <= L; ++k) {
    const LayerSpec& layer = cfg.layers[static_cast<std::size_t>(k - 1)];
    for (const Displacement& d : sets[static_cast<std::size_t>(k - 1)].offsets()) {
      for (const TapOffset& t : layer.taps) {
        Displacement next;
        next.off = {d.off.dy + t.dy, d.off.dx + t.dx};
        next.path = d.path;
        next.path.push_back({k, t});
        sets[static_cast<std::size_t>(k)].insert(std::move(next));
      }
    }
    for (const ResidualEdge& e : cfg.residuals) {
      if (e.to != k) continue;
      for (const Displacement& d : sets[static_cast<std::size_t>(e.from)].offsets()) {
        sets[static_cast<std::size_t>(k)].insert(d);
      }
    }
  }

  DisplacementSet out = sets[static_cast<std::size_t>(L)];
  for (const ResidualEdge& e : cfg.residuals) {
    if (e.to != kResidualToHead) continue;
    for (const Displacement& d : sets[static_cast<std::size_t>(e.from)].offsets()) out.insert(d);
  }
  return out;
}

namespace {

NetConfig require_blind_spot(NetConfig cfg) {
  DisplacementSet ds = displacement_set(cfg);
  if (const Displacement* hit = ds.find({0, 0})) {
    throw Error("blind-spot violation: offset sum " + format_path(hit->path) +
                " reaches (0,0)");
  }
  return cfg;
}

}  // namespace

BsnNet::BsnNet(NetConfig cfg, std::uint64_t seed)
    : BsnNet(Raw{}, require_blind_spot(std::move(cfg)), seed) {}

BsnNet BsnNet::unchecked(NetConfig cfg, std::uint64_t seed) {
  displacement_set(cfg);  // still reject malformed configs, just not leaky ones
  return BsnNet(Raw{}, std::move(cfg), seed);
}

BsnNet::BsnNet(Raw, NetConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)) {
  CounterRng rng(seed, stream::param_init);
  const Index L = static_cast<Index>(cfg_.layers.size());
  for (Index k = 1; k <= L; ++k) {
    const LayerSpec& l = cfg_.layers[static_cast<std::size_t>(k - 1)];
    const Index t = static_cast<Index>(l.taps.size());
    const Scalar sd = std::sqrt(2.0 / static_cast<Scalar>(l.in_channels * t));
    TapConvLayer conv;
    conv.w = {"bsn.l" + std::to_string(k) + ".w",
              Tensor::leaf({l.out_channels, l.in_channels, t},
                           rng.normal_array(l.out_channels * l.in_channels * t) * sd, true)};
    conv.b = {"bsn.l" + std::to_string(k) + ".b",
              Tensor::leaf({l.out_channels}, ArrayX::Zero(l.out_channels), true)};
    conv.taps = l.taps;
    convs_.push_back(std::move(conv));
    prelus_.push_back(l.has_prelu ? make_prelu("bsn.l" + std::to_string(k), l.out_channels)
                                  : PReluLayer{});
  }
  for (Index k : cfg_.rm_after) {
    const Index c = cfg_.layers[static_cast<std::size_t>(k - 1)].out_channels;
    std::string base = "bsn.rm" + std::to_string(k);
    ResidualModule rm;
    rm.pre0 = make_prelu(base + ".pre0", c);
    rm.c0 = make_dense_conv(base + ".c0", c, c, 1, 0, rng);
    rm.pre1 = make_prelu(base + ".pre1", c);
    // Zero-initialized closing conv: each module starts as the identity.
    // With a live branch at init, every module doubles activation variance
    // and a deep stack saturates the coefficient sigmoids head-side.
    rm.c1 = make_dense_conv(base + ".c1", c, c, 1, 0, rng, 0.0);
    rms_.emplace(k, std::move(rm));
  }
  const Index wlast = cfg_.layers.back().out_channels;
  head0_ = make_dense_conv("bsn.head0", wlast, cfg_.head_hidden, 1, 0, rng);
  head_prelu_ = make_prelu("bsn.head", cfg_.head_hidden);
  head1_ = make_dense_conv("bsn.head1", cfg_.head_hidden, 2, 1, 0, rng);
}

Tensor BsnNet::forward(const Tensor& z) const {
  if (z.ndim() != 4 || z.dim(1) != cfg_.layers[0].in_channels) {
    throw ShapeError("bsn: input must be (N," + std::to_string(cfg_.layers[0].in_channels) +
                     ",H,W)");
  }
  const Index L = static_cast<Index>(cfg_.layers.size());
  std::vector<Tensor> h(static_cast<std::size_t>(L) + 1);
  h[0] = z;
  for (Index k = 1; k <= L; ++k) {
    const TapConvLayer& conv = convs_[static_cast<std::size_t>(k - 1)];
    Tensor t = conv2d_taps(h[static_cast<std::size_t>(k - 1)], conv.w.tensor, conv.b.tensor,
                           conv.taps);
    if (cfg_.layers[static_cast<std::size_t>(k - 1)].has_prelu) {
      t = prelus_[static_cast<std::size_t>(k - 1)](t);
    }
    auto rm = rms_.find(k);
    if (rm != rms_.end()) t = rm->second(t);
    for (const ResidualEdge& e : cfg_.residuals) {
      if (e.to == k) t = t + h[static_cast<std::size_t>(e.from)];
    }
    h[static_cast<std::size_t>(k)] = t;
  }
  Tensor features = h[static_cast<std::size_t>(L)];
  for (const ResidualEdge& e : cfg_.residuals) {
    if (e.to == kResidualToHead) features = features + h[static_cast<std::size_t>(e.from)];
  }
  return head1_(head_prelu_(head0_(features)));
}

std::vector<Parameter> BsnNet::parameters() const {
  std::vector<Parameter> out;
  for (std::size_t k = 0; k < convs_.size(); ++k) {
    out.push_back(convs_[k].w);
    out.push_back(convs_[k].b);
    if (cfg_.layers[k].has_prelu) append_params(out, prelus_[k]);
  }
  for (const auto& [k, rm] : rms_) {
    append_params(out, rm.pre0);
    append_params(out, rm.c0);
    append_params(out, rm.pre1);
    append_params(out, rm.c1);
  }
  append_params(out, head0_);
  append_params(out, head_prelu_);
  append_params(out, head1_);
  return out;
}

BsnNet build_net(const NetConfig& cfg, std::uint64_t seed) { return BsnNet(cfg, seed); }

BlindSpotReport blind_spot_check(const BsnNet& net, Index trials, std::uint64_t seed,
                                 Index image_size) {
  NoGradGuard off;
  CounterRng rng(seed, stream::perturbation);
  const Index S = image_size;
  static const Scalar deltas[4] = {1.0, -1.0, 100.0, -100.0};
  BlindSpotReport report;
  report.trials = trials;
  for (Index trial = 0; trial < trials; ++trial) {
    ArrayX base = rng.uniform_array(S * S);
    const Index py = static_cast<Index>(rng.next_u64() % static_cast<std::uint64_t>(S));
    const Index px = static_cast<Index>(rng.next_u64() % static_cast<std::uint64_t>(S));
    ArrayX pert = base;
    pert[py * S + px] += deltas[rng.next_u64() % 4];

    Tensor out_base = net.forward(Tensor::from_array({1, 1, S, S}, std::move(base)));
    Tensor out_pert = net.forward(Tensor::from_array({1, 1, S, S}, std::move(pert)));
    for (Index c = 0; c < 2; ++c) {
      const Index at = c * S * S + py * S + px;
      if (std::bit_cast<std::uint64_t>(out_base.array()[at]) !=
          std::bit_cast<std::uint64_t>(out_pert.array()[at])) {
        ++report.failures;
        break;
      }
    }
  }
  report.pass = report.failures == 0;
  return report;
}

Index count_parameters(const NetConfig& cfg) {
  validate_config(cfg);
  Index total = 0;
  for (const LayerSpec& l : cfg.layers) {
    total += l.out_channels * l.in_channels * static_cast<Index>(l.taps.size());
    total += l.out_channels;
    if (l.has_prelu) total += l.out_channels;
  }
  for (Index k : cfg.rm_after) {
    const Index c = cfg.layers[static_cast<std::size_t>(k - 1)].out_channels;
    total += 2 * (c * c + c) + 2 * c;
  }
  const Index wlast = cfg.layers.back().out_channels;
  total += cfg.head_hidden * wlast + cfg.head_hidden;  // head conv 0
  total += cfg.head_hidden;                            // head prelu
  total += 2 * cfg.head_hidden + 2;                    // head conv 1
  return total;
}

namespace {

TapOffset parse_tap(const std::string& tok) {
  if (tok.size() < 5 || tok.front() != '(' || tok.back() != ')') {
    throw ConfigError("net config: bad tap token '" + tok + "'");
  }
  std::string inner = tok.substr(1, tok.size() - 2);
  auto comma = inner.find(',');
  if (comma == std::string::npos) throw ConfigError("net config: bad tap token '" + tok + "'");
  try {
    return {std::stoi(inner.substr(0, comma)), std::stoi(inner.substr(comma + 1))};
  } catch (const std::exception&) {
    throw ConfigError("net config: bad tap token '" + tok + "'");
  }
}

}  // namespace

NetConfig parse_net_config(const std::string& text) {
  NetConfig cfg;
  cfg.layers.clear();
  std::istringstream in(text);
  std::string line;
  bool saw_head = false;
  while (std::getline(in, line)) {
    auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    std::istringstream ls(line);
    std::string directive;
    if (!(ls >> directive)) continue;
    if (directive == "width") {
      if (!(ls >> cfg.width)) throw ConfigError("net config: width needs a value");
    } else if (directive == "layer") {
      LayerSpec spec;
      std::string flag, colon;
      if (!(ls >> spec.in_channels >> spec.out_channels >> flag >> colon) || colon != ":") {
        throw ConfigError("net config: layer line needs 'layer IN OUT prelu|noprelu : taps...'");
      }
      if (flag == "prelu") {
        spec.has_prelu = true;
      } else if (flag == "noprelu") {
        spec.has_prelu = false;
      } else {
        throw ConfigError("net config: unknown layer flag '" + flag + "'");
      }
      std::string tok;
      while (ls >> tok) spec.taps.push_back(parse_tap(tok));
      cfg.layers.push_back(std::move(spec));
    } else if (directive == "rm") {
      Index k;
      if (!(ls >> k)) throw ConfigError("net config: rm needs a layer index");
      cfg.rm_after.push_back(k);
    } else if (directive == "residual") {
      std::string tag, to;
      ResidualEdge e;
      if (!(ls >> tag >> e.from >> to)) {
        throw ConfigError("net config: residual line needs 'residual Inner|Outer FROM TO|head'");
      }
      if (tag == "Inner") {
        e.tag = ResidualTag::Inner;
      } else if (tag == "Outer") {
        e.tag = ResidualTag::Outer;
      } else {
        throw ConfigError("net config: unknown residual tag '" + tag + "'");
      }
      e.to = to == "head" ? kResidualToHead : static_cast<Index>(std::stoll(to));
      cfg.residuals.push_back(e);
    } else if (directive == "head") {
      if (!(ls >> cfg.head_hidden)) throw ConfigError("net config: head needs a width");
      saw_head = true;
    } else {
      throw ConfigError("net config: unknown directive '" + directive + "'");
    }
  }
  if (!saw_head) cfg.head_hidden = cfg.width;
  validate_config(cfg);
  return cfg;
}

NetConfig read_net_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open net config: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_net_config(ss.str());
}

std::string serialize_net_config(const NetConfig& cfg) {
  std::ostringstream out;
  out << "width " << cfg.width << "\n";
  for (const LayerSpec& l : cfg.layers) {
    out << "layer " << l.in_channels << " " << l.out_channels << " "
        << (l.has_prelu ? "prelu" : "noprelu") << " :";
    for (const TapOffset& t : l.taps) out << " (" << t.dy << "," << t.dx << ")";
    out << "\n";
  }
  for (Index k : cfg.rm_after) out << "rm " << k << "\n";
  for (const ResidualEdge& e : cfg.residuals) {
    out << "residual " << (e.tag == ResidualTag::Inner ? "Inner" : "Outer") << " " << e.from
        << " ";
    if (e.to == kResidualToHead) {
      out << "head\n";
    } else {
      out << e.to << "\n";
    }
  }
  out << "head " << cfg.head_hidden << "\n";
  return out.str();
}

namespace {

std::vector<TapOffset> ring_taps(int s, bool center) {
  std::vector<TapOffset> taps = {{s, 0}, {-s, 0}, {0, s}, {0, -s},
                                 {s, s}, {s, -s}, {-s, s}, {-s, -s}};
  if (center) taps.push_back({0, 0});
  return taps;
}

}  // namespace

NetConfig fbi_safe_17() {
  NetConfig cfg;
  cfg.width = 32;
  cfg.head_hidden = 32;
  cfg.layers.push_back({ring_taps(1, false), 1, 32, true});
  for (int k = 2; k <= 4; ++k) cfg.layers.push_back({ring_taps(2, true), 32, 32, true});
  for (int k = 5; k <= 17; ++k) cfg.layers.push_back({ring_taps(4, true), 32, 32, true});
  for (Index k = 2; k <= 17; ++k) cfg.rm_after.push_back(k);
  cfg.residuals.push_back({ResidualTag::Inner, 1, 9});
  cfg.residuals.push_back({ResidualTag::Outer, 1, kResidualToHead});
  return cfg;
}

NetConfig paper_literal() {
  NetConfig cfg;
  cfg.width = 32;
  cfg.head_hidden = 32;
  cfg.layers.push_back({ring_taps(1, false), 1, 32, true});
  cfg.layers.push_back({ring_taps(2, false), 32, 32, true});
  cfg.layers.push_back({ring_taps(3, true), 32, 32, true});
  return cfg;
}

}  // namespace fbi
