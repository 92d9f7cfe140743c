#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "fbi/bsn.hpp"
#include "fbi/config.hpp"
#include "fbi/denoiser.hpp"
#include "fbi/image_io.hpp"
#include "fbi/metrics.hpp"
#include "fbi/pge.hpp"
#include "fbi/synthetic.hpp"
#include "fbi/var_est.hpp"
#include "fbi/vst.hpp"

namespace fs = std::filesystem;
using namespace fbi;

namespace {

std::vector<fs::path> list_pgms(const std::string& dir) {
  std::vector<fs::path> paths;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".pgm") {
      paths.push_back(entry.path());
    }
  }
  std::sort(paths.begin(), paths.end());
  if (paths.empty()) throw Error("no .pgm files in " + dir);
  return paths;
}

std::vector<Tensor> load_images(const std::string& path, std::vector<std::string>* names) {
  std::vector<Tensor> images;
  if (fs::is_directory(path)) {
    for (const fs::path& p : list_pgms(path)) {
      images.push_back(read_pgm(p.string()));
      if (names) names->push_back(p.filename().string());
    }
  } else {
    images.push_back(read_pgm(path));
    if (names) names->push_back(fs::path(path).filename().string());
  }
  return images;
}

NetConfig resolve_net_config(const std::string& spec) {
  if (spec == "fbi-safe-17") return fbi_safe_17();
  if (spec == "paper-literal") return paper_literal();
  return read_net_config(spec);
}

std::vector<Scalar> parse_grid(const std::string& csv) {
  std::vector<Scalar> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      out.push_back(std::stod(item));
    } catch (const std::exception&) {
      throw ConfigError("bad grid value '" + item + "'");
    }
  }
  if (out.empty()) throw ConfigError("empty grid '" + csv + "'");
  return out;
}

RunConfig load_run_config(const std::string& path) {
  return path.empty() ? RunConfig{} : read_run_config(path);
}

void print_run_config(const RunConfig& cfg) {
  std::cout << "resolved run config:\n" << serialize_run_config(cfg);
}

PgeNet load_pge(const std::string& ckpt) {
  PgeNet net(1);
  auto params = net.parameters();
  load_checkpoint(ckpt, params);
  return net;
}

BsnNet load_bsn(const NetConfig& cfg, const std::string& ckpt) {
  BsnNet net(cfg, 1);
  auto params = net.parameters();
  load_checkpoint(ckpt, params);
  return net;
}

void check_pge_compatible(const Tensor& img) {
  if (img.dim(0) % 4 != 0 || img.dim(1) % 4 != 0) {
    throw Error("image dims must be divisible by 4 for the parameter estimator, got " +
                shape_str(img.shape()));
  }
}

struct TextureOpts {
  std::string out;
  Index count = 8;
  Index height = 128;
  Index width = 128;
  std::uint64_t seed = 1;
  Scalar lo = 0.25;
  Scalar hi = 0.85;
};

void run_texture(const TextureOpts& o) {
  fs::create_directories(o.out);
  auto corpus = make_texture_corpus(o.count, o.height, o.width, o.seed, o.lo, o.hi);
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    std::ostringstream name;
    name << "tex_" << std::setw(3) << std::setfill('0') << i << ".pgm";
    write_pgm((fs::path(o.out) / name.str()).string(), corpus[i]);
  }
  std::cout << "wrote " << corpus.size() << " textures to " << o.out << "\n";
}

struct SynthOpts {
  std::string in, out;
  Scalar alpha = 0.05;
  Scalar sigma = 0.02;
  std::string mode = "mean-preserving";
  std::uint64_t seed = 1;
  bool no_clip = false;
};

void run_synth(const SynthOpts& o) {
  const SynthesisMode mode = mode_from_name(o.mode);
  const NoiseParams p(o.alpha, o.sigma);
  std::vector<std::string> names;
  std::vector<Tensor> clean = load_images(o.in, &names);
  const bool dir_mode = clean.size() > 1 || fs::is_directory(o.in);
  if (dir_mode) fs::create_directories(o.out);
  for (std::size_t i = 0; i < clean.size(); ++i) {
    Tensor noisy = synthesize(clean[i], p, mode, o.seed + i, !o.no_clip);
    std::string dest = dir_mode ? (fs::path(o.out) / names[i]).string() : o.out;
    write_pgm(dest, noisy);
    std::cout << names[i] << " -> " << dest << "\n";
  }
}

struct EstimateOpts {
  std::string in;
  std::string method = "eta";
  std::string ckpt;
  Scalar alpha = 0;
  Scalar sigma = 0;
  Index patch_size = 7;
  Index stride = 3;
};

void run_estimate(const EstimateOpts& o) {
  Tensor y = read_pgm(o.in);
  if (o.method == "pge") {
    if (o.ckpt.empty()) throw Error("--method pge needs --ckpt");
    check_pge_compatible(y);
    PgeNet net = load_pge(o.ckpt);
    NoiseParams p = pge_forward(y, net);
    std::cout << "alpha = " << p.alpha << "\n" << "sigma = " << p.sigma << "\n";
    return;
  }
  NoGradGuard off;
  if (o.alpha > 0) y = gat(y, NoiseParams(o.alpha, o.sigma));
  EtaDetails det;
  Scalar e = eta(y, {o.patch_size, o.stride}, &det).value();
  std::cout << "eta = " << e << "\n";
  std::cout << "selected " << det.selected << " of " << det.eigenvalues.size()
            << " eigenvalues from " << det.patches << " patches\n";
}

struct TrainPgeOpts {
  std::string data, out, config;
  bool supervised = false;
};

void run_train_pge(const TrainPgeOpts& o) {
  RunConfig rc = load_run_config(o.config);
  print_run_config(rc);
  std::vector<Tensor> patches = load_images(o.data, nullptr);
  for (const Tensor& p : patches) {
    check_pge_compatible(p);
    if (p.shape() != patches.front().shape()) {
      throw Error("training patches must share one shape");
    }
  }
  PgeNet net(rc.seed);
  TrainPgeConfig cfg;
  cfg.epochs = rc.epochs > 0 ? rc.epochs : cfg.epochs;
  cfg.batch = rc.batch;
  cfg.lr = rc.lr;
  cfg.seed = rc.seed;
  if (o.supervised) {
    cfg.supervised = true;
    cfg.truth = NoiseParams(rc.alpha, rc.sigma);
    std::cout << "supervised ablation: target (" << rc.alpha << ", " << rc.sigma << ")\n";
  }
  TrainHistory hist = train_pge(patches, net, cfg);
  for (std::size_t i = 0; i < hist.epoch_loss.size(); ++i) {
    std::cout << "epoch " << i << ": loss " << hist.epoch_loss[i] << "\n";
  }
  if (hist.floor_warnings > 0) {
    std::cout << "floor warnings: " << hist.floor_warnings << "\n";
  }
  write_checkpoint(o.out, net.parameters());
  std::cout << "saved " << o.out << "\n";
}

struct TrainDenoiserOpts {
  std::string data, out, config;
  std::string net_config = "fbi-safe-17";
  std::string pge_ckpt;
  std::string clean;
  Scalar alpha = 0;
  Scalar sigma = 0;
};

void run_train_denoiser(const TrainDenoiserOpts& o) {
  RunConfig rc = load_run_config(o.config);
  if (o.alpha > 0) rc.alpha = o.alpha;
  if (o.sigma > 0) rc.sigma = o.sigma;
  print_run_config(rc);
  std::vector<Tensor> images = load_images(o.data, nullptr);
  BsnNet net(resolve_net_config(o.net_config), rc.seed);
  TrainDenoiserConfig cfg;
  cfg.epochs = rc.epochs > 0 ? rc.epochs : cfg.epochs;
  cfg.batch = rc.batch;
  cfg.patch = rc.patch;
  cfg.lr = rc.lr;
  cfg.seed = rc.seed;
  std::vector<NoiseParams> params;
  if (!o.pge_ckpt.empty()) {
    PgeNet pge = load_pge(o.pge_ckpt);
    for (const Tensor& img : images) {
      check_pge_compatible(img);
      params.push_back(pge_forward(img, pge));
    }
  } else {
    params.assign(images.size(), NoiseParams(rc.alpha, rc.sigma));
  }
  DenoiserHistory hist;
  if (!o.clean.empty()) {
    std::vector<Tensor> cleans = load_images(o.clean, nullptr);
    std::cout << "supervised ablation: plain mse against " << cleans.size() << " cleans\n";
    hist = train_denoiser_supervised(images, cleans, params, net, cfg);
  } else {
    hist = train_denoiser(images, params, net, cfg);
  }
  for (std::size_t i = 0; i < hist.epoch_loss.size(); ++i) {
    std::cout << "epoch " << i << ": loss " << hist.epoch_loss[i] << "\n";
  }
  write_checkpoint(o.out, net.parameters());
  std::cout << "saved " << o.out << "\n";
}

struct DenoiseOpts {
  std::string in, out;
  std::string net_ckpt;
  std::string net_config = "fbi-safe-17";
  std::string pge_ckpt;
  Scalar alpha = 0;
  Scalar sigma = 0;
  std::string mode = "mean-preserving";
};

void run_denoise(const DenoiseOpts& o) {
  const SynthesisMode mode = mode_from_name(o.mode);
  Tensor y = read_pgm(o.in);
  BsnNet net = load_bsn(resolve_net_config(o.net_config), o.net_ckpt);
  Tensor result;
  if (!o.pge_ckpt.empty()) {
    check_pge_compatible(y);
    PgeNet pge = load_pge(o.pge_ckpt);
    NoiseParams p = pge_forward(y, pge);
    std::cout << "estimated alpha = " << p.alpha << ", sigma = " << p.sigma << "\n";
    result = denoise(y, p, net, mode);
  } else {
    if (!(o.alpha > 0)) throw Error("denoise needs --pge-ckpt or --alpha/--sigma");
    result = denoise(y, NoiseParams(o.alpha, o.sigma), net, mode);
  }
  write_pgm(o.out, result);
  std::cout << "wrote " << o.out << "\n";
}

struct EvalOpts {
  std::string pred, clean;
};

void run_eval(const EvalOpts& o) {
  std::vector<std::string> pred_names, clean_names;
  std::vector<Tensor> pred = load_images(o.pred, &pred_names);
  std::vector<Tensor> clean = load_images(o.clean, &clean_names);
  if (pred.size() != clean.size()) throw Error("eval: image count mismatch");
  Scalar psnr_sum = 0, ssim_sum = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    Scalar ps = psnr(pred[i], clean[i]);
    Scalar ss = ssim(pred[i], clean[i]);
    psnr_sum += ps;
    ssim_sum += ss;
    std::cout << pred_names[i] << " psnr=" << ps << " ssim=" << ss << "\n";
  }
  const Scalar n = static_cast<Scalar>(pred.size());
  std::cout << "mean psnr=" << psnr_sum / n << " ssim=" << ssim_sum / n << "\n";
}

struct AnalyzeOpts {
  std::string config;
  Index check_trials = 0;
  std::uint64_t seed = 1;
};

int run_analyze(const AnalyzeOpts& o) {
  NetConfig cfg = resolve_net_config(o.config);
  DisplacementSet ds = displacement_set(cfg);
  auto [rh, rw] = ds.receptive_field();
  std::cout << "layers: " << cfg.layers.size() << "\n";
  std::cout << "width: " << cfg.width << "\n";
  std::cout << "parameters: " << count_parameters(cfg) << "\n";
  std::cout << "displacements: " << ds.size() << "\n";
  std::cout << "receptive-field: " << rh << "x" << rw << "\n";
  if (const Displacement* hit = ds.find({0, 0})) {
    std::cout << "blind-spot: FAIL (offset sum " << format_path(hit->path)
              << " reaches (0,0))\n";
    return 2;
  }
  std::cout << "blind-spot: PASS\n";
  if (o.check_trials > 0) {
    BsnNet net(cfg, o.seed);
    BlindSpotReport rep = blind_spot_check(net, o.check_trials, o.seed);
    std::cout << "empirical check: " << rep.trials << " trials, " << rep.failures
              << " failures\n";
    if (!rep.pass) return 1;
  }
  return 0;
}

struct LocusOpts {
  std::string in;
  std::string alpha_grid, sigma_grid;
  Scalar tol = 0.1;
  Index patch_size = 7;
  Index stride = 3;
};

void run_locus(const LocusOpts& o) {
  Tensor y = read_pgm(o.in);
  Locus locus = stabilization_locus(y, parse_grid(o.alpha_grid), parse_grid(o.sigma_grid), o.tol,
                                    {o.patch_size, o.stride});
  for (const LocusPoint& pt : locus.points) {
    std::cout << "alpha=" << pt.alpha << " sigma=" << pt.sigma << " dev=" << pt.eta_dev << "\n";
  }
  std::cout << locus.points.size() << " grid points within " << locus.tol << " of unit variance\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"blind Poisson-Gaussian denoising pipeline"};
  app.require_subcommand(1);

  TextureOpts tex;
  auto* tex_cmd = app.add_subcommand("texture", "generate a smooth synthetic texture corpus");
  tex_cmd->add_option("--out", tex.out, "output directory")->required();
  tex_cmd->add_option("--count", tex.count);
  tex_cmd->add_option("--height", tex.height);
  tex_cmd->add_option("--width", tex.width);
  tex_cmd->add_option("--seed", tex.seed);
  tex_cmd->add_option("--lo", tex.lo);
  tex_cmd->add_option("--hi", tex.hi);

  SynthOpts synth;
  auto* synth_cmd = app.add_subcommand("synth", "add Poisson-Gaussian noise to clean images");
  synth_cmd->add_option("--in", synth.in, "clean .pgm file or directory")->required();
  synth_cmd->add_option("--out", synth.out, "output file or directory")->required();
  synth_cmd->add_option("--alpha", synth.alpha)->required();
  synth_cmd->add_option("--sigma", synth.sigma)->required();
  synth_cmd->add_option("--mode", synth.mode)
      ->check(CLI::IsMember({"literal", "mean-preserving"}));
  synth_cmd->add_option("--seed", synth.seed);
  synth_cmd->add_flag("--no-clip", synth.no_clip, "keep raw out-of-range samples");

  EstimateOpts est;
  auto* est_cmd = app.add_subcommand("estimate", "estimate noise from a single image");
  est_cmd->add_option("--in", est.in)->required();
  est_cmd->add_option("--method", est.method)->check(CLI::IsMember({"eta", "pge"}));
  est_cmd->add_option("--ckpt", est.ckpt, "parameter-estimator checkpoint (pge method)");
  est_cmd->add_option("--alpha", est.alpha, "transform with these parameters before eta");
  est_cmd->add_option("--sigma", est.sigma);
  est_cmd->add_option("--patch-size", est.patch_size);
  est_cmd->add_option("--stride", est.stride);

  TrainPgeOpts tpge;
  auto* tpge_cmd = app.add_subcommand("train-pge", "train the noise-parameter estimator");
  tpge_cmd->add_option("--data", tpge.data, "directory of noisy .pgm patches")->required();
  tpge_cmd->add_option("--out", tpge.out, "checkpoint path")->required();
  tpge_cmd->add_option("--config", tpge.config, "run config file");
  tpge_cmd->add_flag("--supervised", tpge.supervised,
                     "ablation: regress on the config's alpha/sigma instead of stabilizing");

  TrainDenoiserOpts tden;
  auto* tden_cmd = app.add_subcommand("train-denoiser", "train the blind-spot denoiser");
  tden_cmd->add_option("--data", tden.data, "directory of noisy .pgm images")->required();
  tden_cmd->add_option("--out", tden.out, "checkpoint path")->required();
  tden_cmd->add_option("--config", tden.config, "run config file");
  tden_cmd->add_option("--net-config", tden.net_config,
                       "builtin name (fbi-safe-17, paper-literal) or config path");
  tden_cmd->add_option("--pge-ckpt", tden.pge_ckpt, "estimate per-image parameters");
  tden_cmd->add_option("--alpha", tden.alpha, "known noise parameters instead");
  tden_cmd->add_option("--sigma", tden.sigma);
  tden_cmd->add_option("--clean", tden.clean,
                       "ablation: plain mse against these cleans (paired with --data by "
                       "sorted name) instead of the unbiased loss");

  DenoiseOpts den;
  auto* den_cmd = app.add_subcommand("denoise", "denoise one image with trained checkpoints");
  den_cmd->add_option("--in", den.in)->required();
  den_cmd->add_option("--out", den.out)->required();
  den_cmd->add_option("--net-ckpt", den.net_ckpt)->required();
  den_cmd->add_option("--net-config", den.net_config);
  den_cmd->add_option("--pge-ckpt", den.pge_ckpt);
  den_cmd->add_option("--alpha", den.alpha);
  den_cmd->add_option("--sigma", den.sigma);
  den_cmd->add_option("--mode", den.mode)->check(CLI::IsMember({"literal", "mean-preserving"}));

  EvalOpts ev;
  auto* eval_cmd = app.add_subcommand("eval", "psnr/ssim of predictions against clean images");
  eval_cmd->add_option("--pred", ev.pred)->required();
  eval_cmd->add_option("--clean", ev.clean)->required();

  AnalyzeOpts an;
  auto* an_cmd = app.add_subcommand("analyze-net", "receptive-field and blind-spot analysis");
  an_cmd->add_option("--config", an.config)->required();
  an_cmd->add_option("--check-trials", an.check_trials, "also run the empirical perturbation check");
  an_cmd->add_option("--seed", an.seed);

  LocusOpts loc;
  auto* loc_cmd = app.add_subcommand("locus", "grid points where the transform stabilizes variance");
  loc_cmd->add_option("--in", loc.in)->required();
  loc_cmd->add_option("--alpha-grid", loc.alpha_grid, "comma-separated values")->required();
  loc_cmd->add_option("--sigma-grid", loc.sigma_grid, "comma-separated values")->required();
  loc_cmd->add_option("--tol", loc.tol);
  loc_cmd->add_option("--patch-size", loc.patch_size);
  loc_cmd->add_option("--stride", loc.stride);

  int rc = 0;
  tex_cmd->callback([&] { run_texture(tex); });
  synth_cmd->callback([&] { run_synth(synth); });
  est_cmd->callback([&] { run_estimate(est); });
  tpge_cmd->callback([&] { run_train_pge(tpge); });
  tden_cmd->callback([&] { run_train_denoiser(tden); });
  den_cmd->callback([&] { run_denoise(den); });
  eval_cmd->callback([&] { run_eval(ev); });
  an_cmd->callback([&] { rc = run_analyze(an); });
  loc_cmd->callback([&] { run_locus(loc); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return rc;
}
