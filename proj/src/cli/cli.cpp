#include "qmri/cli/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "qmri/biophys/nlls.hpp"
#include "qmri/core/config.hpp"
#include "qmri/core/qar.hpp"
#include "qmri/metrics/metrics.hpp"
#include "qmri/motion/motion.hpp"
#include "qmri/recon/recon.hpp"
#include "qmri/unfold/train.hpp"

namespace qmri::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// ------------------------------------------------------------------ helpers

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  require(static_cast<bool>(in), ErrorKind::io, "cannot open " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void need_file(const fs::path& p) {
  require(fs::is_regular_file(p), ErrorKind::io, "missing input file " + p.string());
}

void make_dir(const fs::path& p) {
  require(!p.empty(), ErrorKind::usage, "--out is required");
  std::error_code ec;
  fs::create_directories(p, ec);
  require(!ec, ErrorKind::io, "cannot create " + p.string() + ": " + ec.message());
}

void write_echo_times(const fs::path& p, const std::vector<double>& te) {
  write_real(p, RealGrid({te.size()}, te));
}

std::vector<double> read_echo_times(const fs::path& p) {
  need_file(p);
  RealGrid g = read_real(p);
  require(g.ndim() == 1, ErrorKind::shape, p.string() + ": echo times must be 1-D");
  return g.vec();
}

std::uint64_t resolve_seed(const std::optional<std::uint64_t>& flag, const Config& cfg, std::uint64_t fallback) {
  if (flag) return *flag;
  if (const char* env = std::getenv("QMRI_SEED"); env && *env) {
    char* end = nullptr;
    const unsigned long long v = std::strtoull(env, &end, 10);
    require(*end == '\0', ErrorKind::usage, std::string("QMRI_SEED is not an integer: '") + env + "'");
    return v;
  }
  return cfg.get("seed", std::size_t{fallback});
}

Config load_config(const std::string& path) { return path.empty() ? Config{} : Config::load(path); }

struct Provenance {
  std::vector<std::string> argv;
  std::optional<std::uint64_t> seed;
  std::string config_hash;
  std::vector<fs::path> inputs;

  void write(const fs::path& where) const {
    json j;
    j["tool"] = kVersion;
    j["argv"] = argv;
    j["seed"] = seed ? json(*seed) : json(nullptr);
    j["config_hash"] = config_hash;
    json ins = json::array();
    for (const auto& p : inputs) ins.push_back({{"path", p.string()}, {"hash", hash_hex(read_text(p))}});
    j["inputs"] = ins;
    write_file_atomic(where, j.dump(2) + "\n");
  }
};

std::string default_config() {
  unfold::TrainConfig t;
  ConfigWriter w;
  w.comment(std::string(kVersion) + " defaults").put("train.mode", std::string("correct"));
  w.put("denoise.sigma_pct", 5.0).put("denoise.lr", 1e-3).put("denoise.steps", std::size_t{200});
  return w.str() + t.dump();
}

// ------------------------------------------------------------ measurements

struct Measurement {
  forward::MeasurementOperator op;
  forward::KSpaceSet y;
  std::vector<double> echo_times;
};

Measurement load_measurement(const fs::path& dir, Provenance& prov) {
  for (const char* f : {"kspace.qar", "mask.qar", "coils.qar", "echo_times.qar", "measurement.txt"}) {
    need_file(dir / f);
    prov.inputs.push_back(dir / f);
  }
  phantom::CoilMaps coils{read_complex(dir / "coils.qar")};
  MaskGrid m = read_mask(dir / "mask.qar");
  require(m.ndim() == 1, ErrorKind::shape, "mask.qar must be 1-D");
  const Config info = Config::load(dir / "measurement.txt");
  forward::SamplingMask mask;
  mask.keep = m.vec();
  mask.acceleration = static_cast<int>(info.get("acceleration", 1LL));
  mask.central_block = info.get("central_block", std::size_t{0});
  forward::KSpaceSet y{read_complex(dir / "kspace.qar"), mask,
                       info.get("input_snr_db", std::string("inf")) == "inf"
                           ? forward::kNoNoise
                           : info.get("input_snr_db", 0.0)};
  forward::MeasurementOperator op(std::move(coils), mask);
  require(y.data.ndim() == 4 && y.data.dim(0) == op.coils().coils() && y.data.dim(2) == op.height() &&
              y.data.dim(3) == op.width() && mask.lines() == op.height(),
          ErrorKind::shape, "kspace.qar " + dims_to_string(y.data.dims()) + " does not match coils/mask");
  return {std::move(op), std::move(y), read_echo_times(dir / "echo_times.qar")};
}

// ---------------------------------------------------------------- commands

struct Common {
  std::string out;
  std::string config;
  std::optional<std::uint64_t> seed;
  std::size_t workers = 1;
  bool dump_config = false;
};

int cmd_phantom(const Common& c, std::optional<std::size_t> height, std::optional<std::size_t> width,
                std::optional<std::size_t> echoes, std::optional<std::size_t> coils, const std::vector<std::string>& argv,
                std::ostream& out) {
  if (c.dump_config) {
    out << default_config();
    return kOk;
  }
  Config cfg = load_config(c.config);
  unfold::SimConfig sim;
  sim.read(cfg);
  phantom::PhantomSpec ps = sim.phantom;
  if (height) ps.height = *height;
  if (width) ps.width = *width;
  if (echoes) ps.n_echoes = *echoes;
  if (coils) ps.n_coils = *coils;
  ps.seed = resolve_seed(c.seed, cfg, ps.seed);
  cfg.reject_unknown();
  ps.validate();

  const fs::path dir = c.out;
  make_dir(dir);
  QMaps q = phantom::make_qmaps(ps);
  phantom::CoilMaps cm = phantom::make_coil_maps(ps);
  const auto te = ps.echo_times();
  MGREImage x = phantom::forward_biophysics(q, te);
  write_complex(dir / "image.qar", x.data);
  write_real(dir / "x0.qar", q.x0);
  write_real(dir / "r2s.qar", q.r2s);
  write_real(dir / "omega.qar", q.omega);
  write_complex(dir / "f_of_t.qar", q.f_of_t);
  write_mask(dir / "rem.qar", q.rem);
  write_complex(dir / "coils.qar", cm.s);
  write_echo_times(dir / "echo_times.qar", te);

  unfold::SimConfig eff;
  eff.phantom = ps;
  ConfigWriter w;
  eff.write(w);
  w.put("seed", std::size_t{ps.seed});
  write_file_atomic(dir / "config.txt", w.str());
  Provenance{argv, ps.seed, hash_hex(w.str()), {}}.write(dir / "provenance.json");
  return kOk;
}

int cmd_simulate(const Common& c, const std::string& in, int accel, const std::string& snr, const std::string& motion,
                 std::size_t central_cap, const std::vector<std::string>& argv, std::ostream& out) {
  if (c.dump_config) {
    out << default_config();
    return kOk;
  }
  Config cfg = load_config(c.config);
  unfold::SimConfig sim;
  sim.read(cfg);
  const std::uint64_t seed = resolve_seed(c.seed, cfg, 1);
  cfg.reject_unknown();
  require(!in.empty(), ErrorKind::usage, "--in is required");
  require(accel >= 1, ErrorKind::usage, "--accel must be >= 1");
  double snr_db = forward::kNoNoise;
  if (snr != "inf") {
    try {
      std::size_t pos = 0;
      snr_db = std::stod(snr, &pos);
      require(pos == snr.size(), ErrorKind::usage, "");
    } catch (...) {
      fail(ErrorKind::usage, "--snr-db expects a number or 'inf', got '" + snr + "'");
    }
  }

  const fs::path src = in;
  Provenance prov{argv, seed, "", {}};
  for (const char* f : {"image.qar", "coils.qar", "echo_times.qar"}) {
    need_file(src / f);
    prov.inputs.push_back(src / f);
  }
  MGREImage x{read_complex(src / "image.qar"), read_echo_times(src / "echo_times.qar")};
  x.validate();
  phantom::CoilMaps coils{read_complex(src / "coils.qar")};

  RngStream rng(seed, 0x51);
  RngStream mrng = rng.fork(1), srng = rng.fork(2), nrng = rng.fork(3);
  forward::SamplingMask mask = forward::make_mask(x.height(), accel, central_cap, mrng);
  motion::MotionSchedule sched;
  if (motion == "default") {
    sched = motion::sample_schedule(sim.motion_cfg, x.height(), srng);
  } else if (motion != "none") {
    need_file(motion);
    prov.inputs.push_back(motion);
    sched = motion::read_schedule(motion);
  }
  forward::MeasurementOperator op(coils, mask);
  forward::KSpaceSet y = motion::corrupt(op, x, sched, snr_db, nrng);

  const fs::path dir = c.out;
  make_dir(dir);
  write_complex(dir / "kspace.qar", y.data);
  write_mask(dir / "mask.qar", MaskGrid({mask.lines()}, mask.keep));
  write_complex(dir / "coils.qar", coils.s);
  write_echo_times(dir / "echo_times.qar", x.echo_times);
  motion::write_schedule(dir / "motion.txt", sched);
  ConfigWriter info;
  info.put("acceleration", static_cast<long long>(mask.acceleration))
      .put("central_block", mask.central_block)
      .put("kept_lines", mask.kept());
  if (std::isinf(snr_db))
    info.put("input_snr_db", std::string("inf"));
  else
    info.put("input_snr_db", snr_db);
  write_file_atomic(dir / "measurement.txt", info.str());
  ConfigWriter eff;
  sim.write(eff);
  prov.config_hash = hash_hex(eff.str() + info.str());
  prov.write(dir / "provenance.json");
  return kOk;
}

struct Model {
  unfold::TrainConfig cfg;
  std::string mode;
};

Model read_model_config(const fs::path& dir, Provenance& prov) {
  need_file(dir / "train.cfg");
  prov.inputs.push_back(dir / "train.cfg");
  Config c = Config::load(dir / "train.cfg");
  Model m{unfold::TrainConfig::from_config(c), c.get("train.mode", "correct")};
  c.get("denoise.sigma_pct", 0.0);
  c.get("denoise.lr", 0.0);
  c.get("denoise.steps", std::size_t{0});
  c.reject_unknown();
  need_file(dir / "final" / "manifest.txt");
  return m;
}

int cmd_reconstruct(const Common& c, const std::string& in, const std::string& method, std::optional<double> tau,
                    std::size_t iters, double gamma, const std::string& weights, const std::string& denoiser,
                    const std::string& ref, std::size_t tau_evals, const std::vector<std::string>& argv) {
  static const std::vector<std::string> methods{"zf", "tv", "red", "du", "correct"};
  if (std::find(methods.begin(), methods.end(), method) == methods.end())
    fail(ErrorKind::usage, "unknown method '" + method + "' (valid: zf, tv, red, du, correct)");
  require(!in.empty(), ErrorKind::usage, "--in is required");
  require(!c.out.empty(), ErrorKind::usage, "--out is required");

  Provenance prov{argv, std::nullopt, "", {}};
  Measurement m = load_measurement(in, prov);
  std::optional<ComplexGrid> gt;
  if (!ref.empty()) {
    need_file(ref);
    prov.inputs.push_back(ref);
    gt = read_complex(ref);
  }
  auto search = [&](double lo, double hi, const std::function<ComplexGrid(double)>& rec) {
    require(gt.has_value(), ErrorKind::usage, "--tau-search needs --ref");
    return recon::golden_section_tau(lo, hi, tau_evals, [&](double t) { return metrics::snr_db(*gt, rec(t)); })
        .best_tau;
  };

  ConfigWriter eff;
  eff.put("method", method).put("iters", iters).put("gamma", gamma);
  MGREImage result;
  std::optional<nn::EstimatorOutput> maps;
  if (method == "zf") {
    result = recon::zero_fill(m.op, m.y, m.echo_times);
  } else if (method == "tv") {
    auto run_tv = [&](double t) {
      return recon::tv_recon(m.op, m.y, m.echo_times, {t, iters, gamma}).x;
    };
    const double t = tau ? *tau : tau_evals > 0 ? search(1e-4, 1e-1, [&](double v) { return run_tv(v).data; }) : 3e-3;
    eff.put("tau", t);
    result = run_tv(t);
  } else if (method == "red") {
    require(!denoiser.empty(), ErrorKind::usage, "--method red needs --denoiser <train dir>");
    Model md = read_model_config(denoiser, prov);
    nn::ParamStore store;
    RngStream init(0, 0);
    nn::Denoiser net(md.cfg.denoiser, store, init, "dnn");
    nn::load_checkpoint(store, fs::path(denoiser) / "final");
    recon::DenoiserFn fn = [&net](const ComplexGrid& x) { return unfold::to_complex(net.forward(unfold::to_tensor(x))); };
    auto run_red = [&](double t) {
      recon::RedOptions o;
      o.tau = t;
      o.iters = iters;
      o.gamma = gamma;
      return recon::red_recon(m.op, m.y, m.echo_times, fn, o).x;
    };
    const double t = tau ? *tau : tau_evals > 0 ? search(1e-2, 2.0, [&](double v) { return run_red(v).data; }) : 0.2;
    eff.put("tau", t);
    result = run_red(t);
  } else {
    require(!weights.empty(), ErrorKind::usage, "--method " + method + " needs --weights <train dir>");
    Model md = read_model_config(weights, prov);
    require(md.mode != "denoiser", ErrorKind::usage, "--weights points at a denoiser-only model");
    unfold::CorrectNet net(md.cfg.unfold, md.cfg.denoiser, md.cfg.estimator, md.cfg.seed);
    nn::load_checkpoint(net.params(), fs::path(weights) / "final");
    nn::Tensor xh = unfold::r_theta(net, m.op, m.y);
    result = MGREImage{unfold::to_complex(xh), m.echo_times};
    if (method == "correct") maps = unfold::e_phi(net.estimator(), xh);
  }

  const fs::path dir = c.out;
  make_dir(dir);
  write_complex(dir / "image.qar", result.data);
  write_echo_times(dir / "echo_times.qar", result.echo_times);
  if (maps) {
    write_real(dir / "x0.qar", unfold::to_map(maps->x0));
    write_real(dir / "r2s.qar", unfold::to_map(maps->r2s));
  }
  prov.config_hash = hash_hex(eff.str());
  prov.write(dir / "provenance.json");
  return kOk;
}

int cmd_fit(const Common& c, const std::string& in, const std::string& echo_file, const std::string& phantom_dir,
            bool magnitude_only, const std::vector<std::string>& argv) {
  require(!in.empty(), ErrorKind::usage, "--in is required");
  require(!c.out.empty(), ErrorKind::usage, "--out is required");
  Provenance prov{argv, std::nullopt, "", {}};
  fs::path img = in;
  if (fs::is_directory(img)) img /= "image.qar";
  need_file(img);
  prov.inputs.push_back(img);
  const fs::path te_path = echo_file.empty() ? img.parent_path() / "echo_times.qar" : fs::path(echo_file);
  prov.inputs.push_back(te_path);
  MGREImage x{read_complex(img), read_echo_times(te_path)};
  x.validate();

  ComplexGrid f({x.echoes(), x.height(), x.width()}, cplx(1.0, 0.0));
  MaskGrid rem({x.height(), x.width()}, 1);
  if (!phantom_dir.empty()) {
    const fs::path pd = phantom_dir;
    need_file(pd / "f_of_t.qar");
    need_file(pd / "rem.qar");
    prov.inputs.push_back(pd / "f_of_t.qar");
    prov.inputs.push_back(pd / "rem.qar");
    f = read_complex(pd / "f_of_t.qar");
    rem = read_mask(pd / "rem.qar");
  }
  biophys::FitOptions opt;
  opt.magnitude_only = magnitude_only;
  opt.fit_omega = !magnitude_only;
  biophys::MapFit fit = biophys::nlls_fit_map(x, f, rem, opt, static_cast<unsigned>(c.workers));

  const fs::path dir = c.out;
  make_dir(dir);
  write_real(dir / "x0.qar", fit.maps.x0);
  write_real(dir / "r2s.qar", fit.maps.r2s);
  write_real(dir / "omega.qar", fit.maps.omega);
  ConfigWriter rep;
  rep.put("fitted", fit.report.fitted)
      .put("below_threshold", fit.report.below_threshold)
      .put("not_converged", fit.report.not_converged);
  write_file_atomic(dir / "fit_report.txt", rep.str());
  prov.config_hash = hash_hex(std::string(magnitude_only ? "magnitude" : "complex"));
  prov.write(dir / "provenance.json");
  return kOk;
}

int cmd_train(const Common& c, const std::string& mode_flag, const std::vector<std::string>& argv, std::ostream& out) {
  if (c.dump_config) {
    out << default_config();
    return kOk;
  }
  require(!c.out.empty(), ErrorKind::usage, "--out is required");
  Config cfg = load_config(c.config);
  unfold::TrainConfig tc = unfold::TrainConfig::from_config(cfg);
  std::string mode = cfg.get("train.mode", "correct");
  if (!mode_flag.empty()) mode = mode_flag;
  unfold::DenoiserTrainConfig dc;
  dc.sigma_pct = cfg.get("denoise.sigma_pct", dc.sigma_pct);
  dc.lr = cfg.get("denoise.lr", dc.lr);
  dc.steps = cfg.get("denoise.steps", dc.steps);
  tc.seed = resolve_seed(c.seed, cfg, tc.seed);
  if (c.workers > 1) tc.workers = c.workers;
  cfg.reject_unknown();
  require(mode == "correct" || mode == "du" || mode == "denoiser", ErrorKind::usage,
          "unknown training mode '" + mode + "' (valid: correct, du, denoiser)");
  if (mode == "du") tc.lambda = 0.0;

  const fs::path dir = c.out;
  make_dir(dir);
  tc.out_dir = dir;
  ConfigWriter head;
  head.put("train.mode", mode)
      .put("denoise.sigma_pct", dc.sigma_pct)
      .put("denoise.lr", dc.lr)
      .put("denoise.steps", dc.steps);
  unfold::TrainConfig saved = tc;
  saved.out_dir.clear();
  const std::string eff = head.str() + saved.dump();
  write_file_atomic(dir / "train.cfg", eff);

  std::vector<unfold::Sample> data = unfold::make_dataset(tc.sim, tc.train_slices, tc.seed, 1, tc.workers);
  if (mode == "denoiser") {
    dc.spec = tc.denoiser;
    dc.seed = tc.seed;
    std::vector<MGREImage> images;
    for (auto& s : data) images.push_back(s.x);
    unfold::DenoiserModel model = unfold::train_denoiser(dc, images);
    nn::save_checkpoint(model.params, dir / "final");
  } else {
    unfold::TrainResult r = unfold::train(tc, data);
    nn::save_checkpoint(r.net->params(), dir / "final");
  }
  Provenance{argv, tc.seed, hash_hex(eff), {}}.write(dir / "provenance.json");
  return kOk;
}

ComplexGrid mask_complex(ComplexGrid g, const MaskGrid& m) {
  const std::size_t hw = m.size();
  require(g.size() % hw == 0 && g.dim(g.ndim() - 1) * g.dim(g.ndim() - 2) == hw, ErrorKind::shape,
          "--mask does not match the image grid");
  for (std::size_t i = 0; i < g.size(); ++i)
    if (!m[i % hw]) g[i] = 0.0;
  return g;
}

RealGrid mask_real(RealGrid g, const MaskGrid& m) {
  const std::size_t hw = m.size();
  require(g.ndim() >= 2 && g.dim(g.ndim() - 1) * g.dim(g.ndim() - 2) == hw, ErrorKind::shape,
          "--mask does not match the image grid");
  for (std::size_t i = 0; i < g.size(); ++i)
    if (!m[i % hw]) g[i] = 0.0;
  return g;
}

int cmd_eval(const std::string& ref, const std::vector<std::string>& ests, const std::vector<std::string>& labels,
             const std::string& rate, const std::string& mask_path, const std::string& out_path,
             const std::vector<std::string>& argv, std::ostream& out) {
  require(!ref.empty() && !ests.empty(), ErrorKind::usage, "eval needs --ref and at least one --est");
  require(labels.empty() || labels.size() == ests.size(), ErrorKind::usage, "--label count must match --est count");
  Provenance prov{argv, std::nullopt, "", {}};
  need_file(ref);
  prov.inputs.push_back(ref);
  std::optional<MaskGrid> mask;
  if (!mask_path.empty()) {
    need_file(mask_path);
    prov.inputs.push_back(mask_path);
    mask = read_mask(mask_path);
  }
  const AnyGrid r = read_array(ref);
  const bool complex_ref = dtype_of(r) == DType::c64 || dtype_of(r) == DType::c128;

  std::ostringstream table;
  table << "method\trate\tsnr_db\tssim\n";
  for (std::size_t i = 0; i < ests.size(); ++i) {
    need_file(ests[i]);
    prov.inputs.push_back(ests[i]);
    double snr = 0.0, ss = 0.0;
    if (complex_ref) {
      ComplexGrid a = read_complex(ref), b = read_complex(ests[i]);
      require(a.dims() == b.dims(), ErrorKind::shape, "eval: " + ests[i] + " shape differs from --ref");
      if (mask) {
        a = mask_complex(std::move(a), *mask);
        b = mask_complex(std::move(b), *mask);
      }
      snr = metrics::snr_db(a, b);
      RealGrid ma = metrics::magnitude(a), mb = metrics::magnitude(b);
      ss = ma.ndim() == 3 ? metrics::ssim_stack(ma, mb) : metrics::ssim(ma, mb);
    } else {
      RealGrid a = read_real(ref), b = read_real(ests[i]);
      require(a.dims() == b.dims(), ErrorKind::shape, "eval: " + ests[i] + " shape differs from --ref");
      if (mask) {
        a = mask_real(std::move(a), *mask);
        b = mask_real(std::move(b), *mask);
      }
      snr = metrics::snr_db(a, b);
      ss = a.ndim() == 3 ? metrics::ssim_stack(a, b) : metrics::ssim(a, b);
    }
    char buf[64];
    std::snprintf(buf, sizeof buf, "\t%.6f\t%.6f\n", snr, ss);
    table << (labels.empty() ? fs::path(ests[i]).parent_path().filename().string() : labels[i]) << '\t' << rate
          << buf;
  }
  out << table.str();
  if (!out_path.empty()) {
    write_file_atomic(out_path, table.str());
    prov.config_hash = hash_hex(rate + mask_path);
    prov.write(out_path + ".provenance.json");
  }
  return kOk;
}

int cmd_export_pgm(const std::string& in, const std::string& out_path, const std::string& window,
                   std::optional<std::size_t> slice, bool use_magnitude, const std::vector<std::string>& argv) {
  require(!in.empty() && !out_path.empty(), ErrorKind::usage, "export-pgm needs --in and --out");
  need_file(in);
  const AnyGrid a = read_array(in);
  const bool is_complex = dtype_of(a) == DType::c64 || dtype_of(a) == DType::c128;
  RealGrid g;
  if (is_complex) {
    require(use_magnitude, ErrorKind::usage, "export-pgm: input is complex, pass --magnitude");
    g = metrics::magnitude(read_complex(in));
  } else {
    g = read_real(in);
  }
  std::size_t h = 0, w = 0;
  std::vector<double> px;
  if (g.ndim() == 2) {
    require(!slice || *slice == 0, ErrorKind::usage, "export-pgm: --slice given for a 2-D input");
    h = g.dim(0);
    w = g.dim(1);
    px = g.vec();
  } else {
    require(g.ndim() == 3, ErrorKind::usage, "export-pgm: input must be 2-D or 3-D, got " + dims_to_string(g.dims()));
    require(slice.has_value(), ErrorKind::usage, "export-pgm: 3-D input needs --slice");
    require(*slice < g.dim(0), ErrorKind::usage, "export-pgm: --slice out of range");
    h = g.dim(1);
    w = g.dim(2);
    px.assign(g.data() + *slice * h * w, g.data() + (*slice + 1) * h * w);
  }
  double lo = *std::min_element(px.begin(), px.end()), hi = *std::max_element(px.begin(), px.end());
  if (!window.empty()) {
    const auto comma = window.find(',');
    try {
      require(comma != std::string::npos, ErrorKind::usage, "");
      lo = std::stod(window.substr(0, comma));
      hi = std::stod(window.substr(comma + 1));
    } catch (...) {
      fail(ErrorKind::usage, "--window expects lo,hi, got '" + window + "'");
    }
    require(hi > lo, ErrorKind::usage, "--window needs hi > lo");
  } else if (hi <= lo) {
    hi = lo + 1.0;
  }
  write_file_atomic(out_path, encode_pgm(px, h, w, lo, hi));
  ConfigWriter eff;
  eff.put("lo", lo).put("hi", hi);
  Provenance{argv, std::nullopt, hash_hex(eff.str()), {fs::path(in)}}.write(out_path + ".provenance.json");
  return kOk;
}

int cmd_replay(const std::string& prov_path, const std::string& new_out, std::ostream& out, std::ostream& err) {
  need_file(prov_path);
  json j;
  try {
    j = json::parse(read_text(prov_path));
  } catch (const json::exception& e) {
    fail(ErrorKind::io, "replay: " + prov_path + " is not a provenance record: " + e.what());
  }
  require(j.contains("argv") && j["argv"].is_array(), ErrorKind::io, "replay: record has no argv");
  for (const auto& in : j.value("inputs", json::array())) {
    const fs::path p = in.at("path").get<std::string>();
    need_file(p);
    require(hash_hex(read_text(p)) == in.at("hash").get<std::string>(), ErrorKind::io,
            "replay: input changed since the recorded run: " + p.string());
  }
  std::vector<std::string> args;
  const auto recorded = j["argv"].get<std::vector<std::string>>();
  for (std::size_t i = 0; i < recorded.size(); ++i) {
    if (recorded[i] == "--seed" && i + 1 < recorded.size()) {
      ++i;
      continue;
    }
    if (recorded[i].rfind("--seed=", 0) == 0) continue;
    if (recorded[i] == "--out" && i + 1 < recorded.size() && !new_out.empty()) {
      args.push_back("--out");
      args.push_back(new_out);
      ++i;
      continue;
    }
    args.push_back(recorded[i]);
  }
  if (!j["seed"].is_null()) {
    args.push_back("--seed");
    args.push_back(std::to_string(j["seed"].get<std::uint64_t>()));
  }
  return run(args, out, err);
}

}  // namespace

std::string encode_pgm(const std::vector<double>& pixels, std::size_t h, std::size_t w, double lo, double hi) {
  require(pixels.size() == h * w, ErrorKind::shape, "encode_pgm: pixel count mismatch");
  require(hi > lo, ErrorKind::usage, "encode_pgm: need hi > lo");
  std::string s = "P5\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
  s.reserve(s.size() + pixels.size());
  for (double v : pixels) {
    const double q = std::round((v - lo) / (hi - lo) * 255.0);
    s.push_back(static_cast<char>(static_cast<unsigned char>(std::clamp(std::isnan(q) ? 0.0 : q, 0.0, 255.0))));
  }
  return s;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Quantitative MRI reconstruction toolkit", "qmri"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  auto add_common = [](CLI::App* sub, Common& c, bool seed, bool config) {
    sub->add_option("--out", c.out, "Output directory");
    sub->add_option("--workers", c.workers, "Worker threads")->check(CLI::PositiveNumber);
    if (seed) sub->add_option("--seed", c.seed, "Random seed (overrides QMRI_SEED and config)");
    if (config) {
      sub->add_option("--config", c.config, "key = value config file");
      sub->add_flag("--dump-config", c.dump_config, "Print the default config and exit");
    }
  };

  Common c;
  std::optional<std::size_t> height, width, echoes, coils;
  auto* ph = app.add_subcommand("phantom", "Generate a synthetic multi-echo slice and its maps");
  add_common(ph, c, true, true);
  ph->add_option("--height", height);
  ph->add_option("--width", width);
  ph->add_option("--echoes", echoes);
  ph->add_option("--coils", coils);

  std::string in, snr = "40", motion = "none";
  int accel = 4;
  std::size_t central_cap = 24;
  auto* sim = app.add_subcommand("simulate", "Subsample, corrupt with motion and add noise");
  add_common(sim, c, true, true);
  sim->add_option("--in", in, "Phantom directory");
  sim->add_option("--accel", accel, "Acceleration factor");
  sim->add_option("--snr-db", snr, "Input SNR in dB, or inf");
  sim->add_option("--motion", motion, "none | default | <schedule file>");
  sim->add_option("--central-cap", central_cap, "Max fully sampled central lines");

  std::string method, weights, denoiser, ref;
  std::optional<double> tau;
  std::size_t iters = 50, tau_evals = 0;
  double gamma = 0.5;
  auto* rec = app.add_subcommand("reconstruct", "Reconstruct a multi-echo image from k-space");
  add_common(rec, c, false, false);
  rec->add_option("--in", in, "Measurement directory");
  rec->add_option("--method", method, "zf | tv | red | du | correct")->required();
  rec->add_option("--tau", tau, "Regularization weight");
  rec->add_option("--iters", iters, "Iterations");
  rec->add_option("--gamma", gamma, "Step size");
  rec->add_option("--weights", weights, "Trained model directory (du, correct)");
  rec->add_option("--denoiser", denoiser, "Trained denoiser directory (red)");
  rec->add_option("--ref", ref, "Ground truth for --tau-search");
  rec->add_option("--tau-search", tau_evals, "Golden-section evaluations for tau (needs --ref)");

  std::string echo_file, phantom_dir;
  bool magnitude_only = false;
  auto* fit = app.add_subcommand("fit", "Voxel-wise NLLS fit of X0, R2*, omega");
  add_common(fit, c, false, false);
  fit->add_option("--in", in, "Image file or reconstruction directory");
  fit->add_option("--echo-times", echo_file, "Echo time file (default: next to the image)");
  fit->add_option("--phantom", phantom_dir, "Directory with f_of_t.qar and rem.qar");
  fit->add_flag("--magnitude-only", magnitude_only, "Fit magnitudes, no omega");

  std::string mode;
  auto* tr = app.add_subcommand("train", "Train the unrolled network (correct, du) or a denoiser");
  add_common(tr, c, true, true);
  tr->add_option("--mode", mode, "correct | du | denoiser (default: train.mode)");

  std::vector<std::string> ests, labels;
  std::string rate = "-", mask_path, out_file;
  auto* ev = app.add_subcommand("eval", "SNR/SSIM table against a reference");
  ev->add_option("--ref", ref, "Reference array");
  ev->add_option("--est", ests, "Estimate array (repeatable)");
  ev->add_option("--label", labels, "Row label per --est");
  ev->add_option("--rate", rate, "Acceleration label");
  ev->add_option("--mask", mask_path, "Restrict to a (H, W) mask");
  ev->add_option("--out", out_file, "Also write the table here");

  std::string window;
  std::optional<std::size_t> slice;
  bool use_mag = false;
  auto* pg = app.add_subcommand("export-pgm", "Write a 2-D slice as 8-bit PGM");
  pg->add_option("--in", in, "Input array");
  pg->add_option("--out", out_file, "Output .pgm");
  pg->add_option("--window", window, "lo,hi");
  pg->add_option("--slice", slice, "Index along the leading axis of a 3-D array");
  pg->add_flag("--magnitude", use_mag, "Use |z| of a complex input");

  std::string prov_path;
  auto* rp = app.add_subcommand("replay", "Re-run an invocation from its provenance record");
  rp->add_option("--provenance", prov_path, "provenance.json")->required();
  rp->add_option("--out", c.out, "Replacement output location");

  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForVersion&) {
    out << kVersion << "\n";
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "qmri: error[usage]: " << e.what() << "\n";
    return kUsage;
  }

  try {
    if (*ph) return cmd_phantom(c, height, width, echoes, coils, args, out);
    if (*sim) return cmd_simulate(c, in, accel, snr, motion, central_cap, args, out);
    if (*rec) return cmd_reconstruct(c, in, method, tau, iters, gamma, weights, denoiser, ref, tau_evals, args);
    if (*fit) return cmd_fit(c, in, echo_file, phantom_dir, magnitude_only, args);
    if (*tr) return cmd_train(c, mode, args, out);
    if (*ev) return cmd_eval(ref, ests, labels, rate, mask_path, out_file, args, out);
    if (*pg) return cmd_export_pgm(in, out_file, window, slice, use_mag, args);
    if (*rp) return cmd_replay(prov_path, c.out, out, err);
  } catch (const Error& e) {
    err << "qmri: error[" << to_string(e.kind()) << "]: " << e.what() << "\n";
    switch (e.kind()) {
      case ErrorKind::usage: return kUsage;
      case ErrorKind::io:
      case ErrorKind::shape: return kIo;
      case ErrorKind::numeric:
      case ErrorKind::domain: return kNumeric;
    }
  } catch (const std::exception& e) {
    err << "qmri: error[internal]: " << e.what() << "\n";
    return kNumeric;
  }
  return kUsage;
}

}  // namespace qmri::cli
