// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits nonzero if any fails. Pass criterion numbers to run a subset.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <functional>
#include <numbers>
#include <set>
#include <sstream>
#include <string>

#include "qmri/biophys/model.hpp"
#include "qmri/biophys/nlls.hpp"
#include "qmri/cli/cli.hpp"
#include "qmri/core/qar.hpp"
#include "qmri/fft/fft2.hpp"
#include "qmri/metrics/metrics.hpp"
#include "qmri/motion/motion.hpp"
#include "qmri/recon/recon.hpp"
#include "qmri/unfold/train.hpp"
#include "support/gradcheck.hpp"
#include "support/tmpdir.hpp"

using namespace qmri;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  bool pass;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

ComplexGrid random_grid(const Dims& d, RngStream& rng) {
  ComplexGrid g(d);
  for (auto& z : g.vec()) z = {rng.normal(), rng.normal()};
  return g;
}

double mean(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

// ------------------------------------------------------------------ 1

Verdict adjoint() {
  RngStream rng(101, 0);
  double worst = 0;
  std::size_t pairs = 0;
  for (std::size_t coils : {1, 4, 8}) {
    phantom::PhantomSpec s;
    s.height = 32;
    s.width = 36;
    s.n_coils = coils;
    s.n_echoes = 3;
    const phantom::CoilMaps maps = phantom::make_coil_maps(s);
    for (int accel : {1, 2, 4}) {
      forward::MeasurementOperator op(maps, accel == 1 ? forward::full_mask(32) : forward::make_mask(32, accel, 6, rng));
      for (int t = 0; t < 100; ++t) {
        ComplexGrid x = random_grid({3, 32, 36}, rng);
        ComplexGrid y = random_grid({coils, 3, 32, 36}, rng);
        const ComplexGrid ax = op.apply(x);
        const cplx lhs = forward::inner(ax, y), rhs = forward::inner(x, op.adjoint(y));
        worst = std::max(worst, std::abs(lhs - rhs) / (forward::norm2(ax) * forward::norm2(y)));
        ++pairs;
      }
    }
  }
  return {worst <= 1e-10, fmt("%zu pairs, worst relative mismatch %.2e", pairs, worst)};
}

// ------------------------------------------------------------------ 2

Verdict nlls_oracle() {
  const auto te = uniform_echo_times(10, 0.004, 0.004);
  RngStream rng(202, 0);
  auto voxel = [&](double& x0, double& r2, double& w, std::vector<cplx>& f) {
    x0 = rng.uniform(10, 200);
    r2 = rng.uniform(5, 60);
    w = rng.uniform(-40, 40);
    const double g = rng.uniform(0, 40);
    f.clear();
    for (double t : te) f.emplace_back(phantom::sinc(g * t), 0.0);
    std::vector<cplx> s(te.size());
    biophys::model_eval(x0, r2, w, f, te, s);
    return s;
  };
  double worst = 0;
  for (int i = 0; i < 1000; ++i) {
    double x0, r2, w;
    std::vector<cplx> f;
    const auto s = voxel(x0, r2, w, f);
    const auto fit = biophys::nlls_fit_voxel(s, f, te);
    worst = std::max(worst, std::abs(fit.x0 - x0) / x0);
    worst = std::max(worst, std::abs(fit.r2s - r2) / r2);
    worst = std::max(worst, std::abs(fit.omega - w) / std::max(std::abs(w), 1.0));
  }
  std::vector<double> err;
  for (int i = 0; i < 1000; ++i) {
    double x0, r2, w;
    std::vector<cplx> f;
    auto s = voxel(x0, r2, w, f);
    double e = 0;
    for (auto z : s) e += std::norm(z);
    const double sigma = std::sqrt(e / static_cast<double>(s.size()) * 1e-4 / 2.0);
    for (auto& z : s) z += cplx(sigma * rng.normal(), sigma * rng.normal());
    err.push_back(std::abs(biophys::nlls_fit_voxel(s, f, te).r2s - r2) / r2);
  }
  std::nth_element(err.begin(), err.begin() + 500, err.end());
  return {worst < 1e-6 && err[500] < 0.05,
          fmt("noiseless worst relative error %.2e, 40 dB median R2* error %.2f%%", worst, 100 * err[500])};
}

// ------------------------------------------------------------------ 3

using testing::gradcheck;
using testing::random_values;

nn::Tensor param(nn::Shape s, RngStream& rng, double lo = -1.0, double hi = 1.0) {
  const std::size_t n = nn::shape_size(s);
  return nn::Tensor::parameter(std::move(s), random_values(n, rng, lo, hi));
}

nn::Tensor probe_loss(const nn::Tensor& y, const std::vector<double>& w) {
  return nn::sum(nn::mul(y, nn::Tensor::constant(y.shape(), w)));
}

std::vector<nn::Tensor> with_params(std::vector<nn::Tensor> v, nn::ParamStore& store) {
  for (auto& p : store.params()) v.push_back(p.value);
  return v;
}

unfold::SimConfig tiny_sim() {
  unfold::SimConfig s;
  s.phantom.height = 16;
  s.phantom.width = 16;
  s.phantom.n_echoes = 3;
  s.phantom.n_coils = 2;
  s.phantom.n_ellipses = 3;
  s.accels = {2};
  s.central_cap = 4;
  s.snr_db = 30.0;
  s.motion_cfg.a_max = 2.0;
  return s;
}

Verdict gradients() {
  using namespace nn;
  RngStream rng(303, 0);
  const std::size_t probes = 12, skips = 10;
  std::vector<std::pair<std::string, testing::GradCheck>> rows;
  auto check = [&](const std::string& name, const std::function<Tensor()>& f, std::vector<Tensor> in) {
    rows.emplace_back(name, gradcheck(f, std::move(in), probes, rng, 1e-6, skips));
  };

  Tensor a = param({1, 3, 16, 16}, rng), b = param({1, 3, 16, 16}, rng), s = param({1}, rng, 0.5, 2.0);
  Tensor w = param({4, 3, 3, 3}, rng), bias = param({4}, rng), z = param({3, 2, 16, 16}, rng);
  const auto w768 = random_values(768, rng), w1024 = random_values(1024, rng), w192 = random_values(192, rng),
             w3072 = random_values(3072, rng), w1536 = random_values(1536, rng), w256 = random_values(256, rng),
             w1080 = random_values(1080, rng), w588 = random_values(588, rng);
  check("conv2d", [&] { return probe_loss(conv2d(a, w, bias), w1024); }, {a, w, bias});
  check("conv2d+relu", [&] { return probe_loss(conv2d(a, w, bias, Activation::relu), w1024); }, {a, w, bias});
  check("add", [&] { return probe_loss(add(a, b), w768); }, {a, b});
  check("sub", [&] { return probe_loss(sub(a, b), w768); }, {a, b});
  check("mul", [&] { return probe_loss(mul(a, b), w768); }, {a, b});
  check("scale", [&] { return probe_loss(scale(a, -1.7), w768); }, {a});
  check("relu", [&] { return probe_loss(relu(a), w768); }, {a});
  check("softplus", [&] { return probe_loss(softplus(a), w768); }, {a});
  check("mul_scalar", [&] { return probe_loss(mul_scalar(a, s), w768); }, {a, s});
  check("div_scalar", [&] { return probe_loss(div_scalar(a, s), w768); }, {a, s});
  check("sum_squares", [&] { return sum_squares(sub(a, b)); }, {a, b});
  check("channel_mean", [&] { return mul(channel_mean(a, 1), channel_mean(b, 2)); }, {a, b});
  check("maxpool2", [&] { return probe_loss(maxpool2(a), w192); }, {a});
  check("upsample2", [&] { return probe_loss(upsample2(a), w3072); }, {a});
  check("concat_channels", [&] { return probe_loss(concat_channels(a, b), w1536); }, {a, b});
  check("pad_to", [&] { return probe_loss(pad_to(a, 18, 20), w1080); }, {a});
  check("crop_to", [&] { return probe_loss(crop_to(a, 14, 14), w588); }, {a});
  check("select_channel", [&] { return probe_loss(select_channel(a, 2), w256); }, {a});
  check("complex_magnitude", [&] { return probe_loss(complex_magnitude(z), w768); }, {z});

  // data-consistency layer: Aᴴ A on the (N, 2, H, W) layout
  unfold::Sample smp = unfold::make_sample(tiny_sim(), RngStream(304, 0));
  {
    const auto& op = smp.op;
    auto normal = [&op](std::span<const double> in, std::span<double> out) {
      ComplexGrid x({3, 16, 16});
      for (std::size_t e = 0; e < 3; ++e)
        for (std::size_t i = 0; i < 256; ++i) x[e * 256 + i] = {in[e * 512 + i], in[e * 512 + 256 + i]};
      const ComplexGrid y = op.normal(x);
      for (std::size_t e = 0; e < 3; ++e)
        for (std::size_t i = 0; i < 256; ++i) {
          out[e * 512 + i] = y[e * 256 + i].real();
          out[e * 512 + 256 + i] = y[e * 256 + i].imag();
        }
    };
    check("linear_map (A^H A)", [&] { return probe_loss(linear_map(z, z.shape(), normal, normal), w1536); }, {z});
  }

  {
    DenoiserSpec spec;
    spec.filters = 4;
    spec.zero_init_last = false;
    ParamStore store;
    Denoiser d(spec, store, rng);
    testing::jitter(store, rng);
    Tensor x = param({3, 2, 16, 16}, rng);
    check("denoiser", [&] { return probe_loss(d.forward(x), w1536); }, with_params({x}, store));
  }
  {
    EstimatorSpec spec;
    spec.in_channels = 3;
    spec.width = 1.0 / 16.0;
    ParamStore store;
    Estimator e(spec, store, rng);
    testing::jitter(store, rng);
    Tensor x = param({1, 3, 16, 16}, rng, 0.1, 1.0);
    const auto v0 = random_values(256, rng);
    check("estimator", [&] {
      EstimatorOutput o = e.forward(x);
      return add(probe_loss(o.x0, v0), probe_loss(o.r2s, w256));
    }, with_params({x}, store));
  }
  {
    Tensor xh = param({3, 2, 16, 16}, rng), xg = param({3, 2, 16, 16}, rng);
    check("loss_rec", [&] { return unfold::loss_rec(xh, xg); }, {xh});
    Tensor x0 = param({1, 1, 16, 16}, rng, 0.2, 1.2), r2 = param({1, 1, 16, 16}, rng, 5.0, 60.0);
    check("loss_est", [&] {
      return unfold::loss_est({x0, r2}, smp.x.data, smp.x.echo_times, smp.maps.f_of_t, smp.maps.rem);
    }, {x0, r2});
  }
  {
    unfold::TrainConfig t;
    t.unfold.k_steps = 2;
    t.denoiser.filters = 3;
    t.denoiser.zero_init_last = false;
    t.estimator.in_channels = 3;
    t.estimator.width = 1.0 / 16.0;
    unfold::CorrectNet net(t.unfold, t.denoiser, t.estimator, 3);
    testing::jitter(net.params(), rng);
    std::vector<Tensor> ps;
    for (auto& p : net.params().params()) ps.push_back(p.value);
    rows.emplace_back("r_theta -> e_phi -> loss", gradcheck([&] { return unfold::sample_loss(net, smp, 1.0).total; },
                                                          ps, 30, rng, 1e-6, skips));
  }

  double worst = 0;
  std::string worst_name;
  std::size_t redrawn = 0;
  bool ok = true;
  for (const auto& [name, r] : rows) {
    if (r.max_rel_err >= worst) {
      worst = r.max_rel_err;
      worst_name = name;
    }
    redrawn += r.skipped;
    ok = ok && r.max_rel_err < 1e-4 && r.probes >= 10;
  }
  return {ok, fmt("%zu checks, worst %.2e (%s), %zu kink probes redrawn", rows.size(), worst, worst_name.c_str(),
                  redrawn)};
}

// ------------------------------------------------------------------ 4

Verdict motion_reductions() {
  phantom::PhantomSpec s;
  s.height = 48;
  s.width = 48;
  s.n_echoes = 4;
  MGREImage x = phantom::forward_biophysics(phantom::make_qmaps(s), s.echo_times());
  RngStream mr(401, 0);
  forward::MeasurementOperator op(phantom::make_coil_maps(s), forward::make_mask(48, 4, 8, mr));
  bool bitwise = true;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    RngStream n1(seed, 4), n2(seed, 4), n3(seed, 4);
    const auto ref = forward::add_noise(op.apply(x), 40.0, n1);
    bitwise = bitwise && motion::corrupt(op, x, {}, 40.0, n2).data == ref.data;
    motion::MotionSchedule ident;
    ident.events.push_back({motion::RigidMotion{}, seed, 6, 0.12});
    ident.events.push_back({motion::RigidMotion{}, 20 + seed, 9, 0.19});
    bitwise = bitwise && motion::corrupt(op, x, ident, 40.0, n3).data == ref.data;
  }

  phantom::CoilMaps flat{ComplexGrid({1, 48, 48}, cplx(1.0, 0.0))};
  forward::MeasurementOperator full(flat, forward::full_mask(48));
  Fft2 fft(48, 48);
  double worst = 0;
  RngStream tr(402, 0);
  for (int t = 0; t < 5; ++t) {
    const double dx = tr.uniform(-5, 5), dy = tr.uniform(-5, 5);
    motion::MotionSchedule sched;
    sched.events.push_back({motion::RigidMotion{dx, dy, 0.0}, 0, 48, 1.0});
    RngStream nr(0, 0);
    const auto y = motion::corrupt(full, x, sched, forward::kNoNoise, nr);
    double err = 0, scale = 0;
    for (std::size_t e = 0; e < x.echoes(); ++e) {
      std::vector<cplx> k(x.data.slab(e).begin(), x.data.slab(e).end());
      fft.forward(k);
      for (std::size_t r = 0; r < 48; ++r)
        for (std::size_t c = 0; c < 48; ++c) {
          const double ky = static_cast<double>(r) - 24.0, kx = static_cast<double>(c) - 24.0;
          const cplx expect = k[r * 48 + c] * std::polar(1.0, -2 * std::numbers::pi * (kx * dx + ky * dy) / 48.0);
          err = std::max(err, std::abs(y.data(0, e, r, c) - expect));
          scale = std::max(scale, std::abs(expect));
        }
    }
    worst = std::max(worst, err / scale);
  }
  return {bitwise && worst <= 1e-10,
          fmt("empty/identity schedules %s, phase-ramp worst relative error %.2e", bitwise ? "bit-exact" : "DIFFER",
              worst)};
}

// ----------------------------------------------------------- 5, 6 shared

// Desk-scale simulation: 48x48 slices at x4 with motion.
unfold::SimConfig desk_sim() {
  unfold::SimConfig s;
  s.phantom.height = 48;
  s.phantom.width = 48;
  s.accels = {4};
  s.central_cap = 6;
  s.snr_db = 40.0;
  s.motion = true;
  s.motion_cfg.a_max = 2.0;
  s.motion_cfg.r_max = 2.0;
  return s;
}

constexpr std::uint64_t kDataSeed = 2024;
constexpr std::uint64_t kTrainStream = 1, kHeldOutStream = 2, kValidationStream = 3;

const std::vector<unfold::Sample>& held_out() {
  static const std::vector<unfold::Sample> data = unfold::make_dataset(desk_sim(), 32, kDataSeed, kHeldOutStream);
  return data;
}

double r2s_snr(const unfold::Sample& s, const RealGrid& r2s) {
  return metrics::snr_db(metrics::apply_mask(s.maps.r2s, s.maps.rem), metrics::apply_mask(r2s, s.maps.rem));
}

double nlls_r2s_snr(const unfold::Sample& s, const MGREImage& x) {
  return r2s_snr(s, biophys::nlls_fit_map(x, s.maps.f_of_t, s.maps.rem).maps.r2s);
}

// ------------------------------------------------------------------ 5

Verdict classical() {
  // τ is tuned on separate validation slices, then frozen.
  const auto val = unfold::make_dataset(desk_sim(), 4, kDataSeed, kValidationStream);
  auto tv = [](const unfold::Sample& s, double tau) {
    return recon::tv_recon(s.op, s.y, s.x.echo_times, {tau, 50, 0.5}).x;
  };
  const double tau = recon::golden_section_tau(1e-4, 1e-1, 12, [&](double t) {
                       double m = 0;
                       for (const auto& s : val) m += metrics::snr_db(s.x.data, tv(s, t).data);
                       return m;
                     }).best_tau;

  std::vector<double> zf, tvs, zf_r2, tv_r2;
  for (const auto& s : held_out()) {
    const MGREImage a = recon::zero_fill(s.op, s.y, s.x.echo_times), b = tv(s, tau);
    zf.push_back(metrics::snr_db(s.x.data, a.data));
    tvs.push_back(metrics::snr_db(s.x.data, b.data));
    zf_r2.push_back(nlls_r2s_snr(s, a));
    tv_r2.push_back(nlls_r2s_snr(s, b));
  }
  const bool ok = mean(tvs) >= mean(zf) + 2.0 && mean(tv_r2) >= mean(zf_r2);
  return {ok, fmt("tau %.2e; mGRE SNR ZF %.2f, TV %.2f dB; R2* SNR NLLS-on-ZF %.2f, NLLS-on-TV %.2f dB", tau,
                  mean(zf), mean(tvs), mean(zf_r2), mean(tv_r2))};
}

// ------------------------------------------------------------------ 6

unfold::TrainConfig desk_train() {
  unfold::TrainConfig t;
  t.sim = desk_sim();
  t.train_slices = 64;
  t.epochs = 5;
  t.lr = 1e-3;
  t.lr_final = 1e-4;
  t.seed = kDataSeed;
  t.unfold.k_steps = 8;
  t.denoiser.filters = 16;
  t.estimator.in_channels = t.sim.phantom.n_echoes;
  t.estimator.width = 0.25;
  return t;
}

// Means of consecutive 50-step blocks.
std::vector<double> block_means(const std::vector<unfold::StepLog>& curve, std::size_t window = 50) {
  std::vector<double> out;
  for (std::size_t i = 0; i + window <= curve.size(); i += window) {
    double s = 0;
    for (std::size_t j = i; j < i + window; ++j) s += curve[j].loss;
    out.push_back(s / static_cast<double>(window));
  }
  return out;
}

Verdict learned() {
  unfold::TrainConfig tc = desk_train();
  const auto data = unfold::make_dataset(tc.sim, tc.train_slices, tc.seed, kTrainStream);
  const auto t0 = std::chrono::steady_clock::now();
  unfold::TrainResult correct = unfold::train(tc, data);
  unfold::TrainConfig dc = tc;
  dc.lambda = 0.0;
  unfold::TrainResult du = unfold::train(dc, data);
  const double train_min = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() / 60.0;

  std::vector<double> zf, c_snr, d_snr, c_r2, zf_r2;
  for (const auto& s : held_out()) {
    const MGREImage z = recon::zero_fill(s.op, s.y, s.x.echo_times);
    zf.push_back(metrics::snr_db(s.x.data, z.data));
    zf_r2.push_back(nlls_r2s_snr(s, z));
    const nn::Tensor xc = unfold::r_theta(*correct.net, s.op, s.y);
    c_snr.push_back(metrics::snr_db(s.x.data, unfold::to_complex(xc)));
    d_snr.push_back(metrics::snr_db(s.x.data, unfold::to_complex(unfold::r_theta(*du.net, s.op, s.y))));
    c_r2.push_back(r2s_snr(s, unfold::to_map(unfold::e_phi(correct.net->estimator(), xc).r2s)));
  }

  const auto blocks = block_means(correct.curve);
  bool monotone = blocks.size() >= 2;
  for (std::size_t i = 1; i < blocks.size(); ++i) monotone = monotone && blocks[i] < blocks[i - 1];
  std::string trace;
  for (double b : blocks) trace += fmt(" %.3g", b);

  const bool ok = mean(c_snr) >= mean(d_snr) && mean(d_snr) >= mean(zf) && mean(c_r2) >= mean(zf_r2) && monotone;
  return {ok, fmt("mGRE SNR CoRRECT %.2f, DU %.2f, ZF %.2f dB; R2* SNR CoRRECT %.2f, NLLS-on-ZF %.2f dB; "
                  "block means%s (%s); training %.1f min",
                  mean(c_snr), mean(d_snr), mean(zf), mean(c_r2), mean(zf_r2), trace.c_str(),
                  monotone ? "decreasing" : "NOT decreasing", train_min)};
}

// ------------------------------------------------------------------ 7

Verdict red() {
  const unfold::SimConfig sim = desk_sim();
  const auto& s = held_out().front();

  recon::RedOptions o;
  o.tau = 0.37;
  o.gamma = 0.5;
  o.iters = 50;
  const auto r = recon::red_recon(s.op, s.y, s.x.echo_times, [](const ComplexGrid& v) { return v; }, o);
  const ComplexGrid aty = s.op.adjoint(s.y.data);
  ComplexGrid x = aty;
  for (std::size_t k = 0; k < o.iters; ++k) {
    ComplexGrid g = s.op.normal(x);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] -= aty[i];
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = x[i] - o.gamma * g[i];
  }
  const bool bitwise = std::memcmp(r.x.data.data(), x.data(), x.size() * sizeof(cplx)) == 0;

  unfold::DenoiserTrainConfig dc;
  dc.spec.filters = 16;
  dc.steps = 300;
  dc.seed = kDataSeed;
  std::vector<MGREImage> clean;
  for (auto& t : unfold::make_dataset(sim, 16, kDataSeed, kTrainStream)) clean.push_back(t.x);
  unfold::DenoiserModel model = unfold::train_denoiser(dc, clean);
  recon::DenoiserFn fn = [&](const ComplexGrid& v) {
    return unfold::to_complex(model.net->forward(unfold::to_tensor(v)));
  };
  o.tau = 0.2;
  const auto rt = recon::red_recon(s.op, s.y, s.x.echo_times, fn, o);
  const double shrink = rt.residual.front() / rt.residual.back();
  return {bitwise && shrink >= 10.0,
          fmt("identity denoiser %s gradient descent; trained denoiser residual %.3g -> %.3g (%.1fx) over %zu "
              "iterations",
              bitwise ? "equals" : "DIFFERS from", rt.residual.front(), rt.residual.back(), shrink, rt.residual.size())};
}

// ------------------------------------------------------------------ 8

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int qmri(const std::vector<std::string>& args, std::string* err = nullptr) {
  std::ostringstream o, e;
  const int code = cli::run(args, o, e);
  if (err) *err = e.str();
  return code;
}

template <class T>
struct scalar_of {
  using type = T;
};
template <class T>
struct scalar_of<std::complex<T>> {
  using type = T;
};

template <class T>
bool qar_identity(const Dims& d, RngStream& rng, const fs::path& p) {
  Grid<T> g(d);
  for (auto& v : g.vec()) {
    using R = typename scalar_of<T>::type;
    if constexpr (std::is_floating_point_v<T>)
      v = static_cast<T>(rng.normal());
    else
      v = T(static_cast<R>(rng.normal()), static_cast<R>(rng.normal()));
  }
  if (g.size() >= 3) {
    using R = typename scalar_of<T>::type;
    reinterpret_cast<R*>(g.data())[0] = std::numeric_limits<R>::denorm_min();
    reinterpret_cast<R*>(g.data())[1] = -std::numeric_limits<R>::max();
    reinterpret_cast<R*>(g.data())[2] = R(-0.0);
  }
  write_array(p, g);
  const std::string first = slurp(p);
  const AnyGrid back = read_array(p);
  const auto* h = std::get_if<Grid<T>>(&back);
  if (!h || h->dims() != g.dims() || std::memcmp(h->data(), g.data(), g.size() * sizeof(T)) != 0) return false;
  write_array(p, back);
  return slurp(p) == first;
}

Verdict determinism() {
  testing::TmpDir t;
  const std::string d = t.path().string() + "/";
  std::ofstream(t / "train.cfg") << "sim.height = 16\nsim.width = 16\nsim.echoes = 3\nsim.coils = 2\n"
                                    "sim.ellipses = 3\nsim.accels = 2\nsim.central_cap = 4\nmotion.a_max = 2\n"
                                    "train.slices = 2\ntrain.epochs = 1\ntrain.lr = 0.001\nunfold.k_steps = 2\n"
                                    "denoiser.filters = 3\nestimator.width = 0.0625\ndenoise.steps = 5\n";

  // (argv, output location): every output is replayed into a sibling location
  const std::vector<std::pair<std::vector<std::string>, std::string>> runs{
      {{"phantom", "--out", d + "ph", "--height", "32", "--width", "32", "--seed", "5"}, d + "ph"},
      {{"simulate", "--in", d + "ph", "--out", d + "m", "--motion", "default", "--central-cap", "6", "--seed", "9"},
       d + "m"},
      {{"reconstruct", "--in", d + "m", "--out", d + "zf", "--method", "zf"}, d + "zf"},
      {{"reconstruct", "--in", d + "m", "--out", d + "tv", "--method", "tv", "--tau", "0.003"}, d + "tv"},
      {{"reconstruct", "--in", d + "m", "--out", d + "tvs", "--method", "tv", "--tau-search", "4", "--ref",
        d + "ph/image.qar", "--iters", "10"},
       d + "tvs"},
      {{"fit", "--in", d + "tv", "--out", d + "fit", "--phantom", d + "ph", "--workers", "2"}, d + "fit"},
      {{"eval", "--ref", d + "ph/image.qar", "--est", d + "zf/image.qar", "--est", d + "tv/image.qar", "--out",
        d + "table.tsv"},
       d + "table.tsv"},
      {{"export-pgm", "--in", d + "fit/r2s.qar", "--out", d + "r2s.pgm"}, d + "r2s.pgm"},
      {{"phantom", "--out", d + "ph16", "--height", "16", "--width", "16", "--echoes", "3", "--coils", "2"},
       d + "ph16"},
      {{"simulate", "--in", d + "ph16", "--out", d + "m16", "--accel", "2", "--central-cap", "4"}, d + "m16"},
      {{"train", "--config", d + "train.cfg", "--out", d + "net", "--seed", "3"}, d + "net"},
      {{"train", "--config", d + "train.cfg", "--out", d + "den", "--mode", "denoiser"}, d + "den"},
      {{"reconstruct", "--in", d + "m16", "--out", d + "cor", "--method", "correct", "--weights", d + "net"},
       d + "cor"},
      {{"reconstruct", "--in", d + "m16", "--out", d + "red", "--method", "red", "--denoiser", d + "den", "--iters",
        "5"},
       d + "red"},
  };

  std::size_t compared = 0;
  for (const auto& [argv, loc] : runs) {
    std::string err;
    if (qmri(argv, &err) != 0) return {false, "pipeline step failed: " + argv[0] + ": " + err};
    const fs::path prov = fs::is_directory(loc) ? fs::path(loc) / "provenance.json" : fs::path(loc + ".provenance.json");
    const std::string again = loc + ".replay";
    if (qmri({"replay", "--provenance", prov.string(), "--out", again}, &err) != 0)
      return {false, "replay failed for " + argv[0] + ": " + err};
    std::vector<std::pair<fs::path, fs::path>> pairs;
    if (fs::is_directory(loc)) {
      for (const auto& e : fs::recursive_directory_iterator(loc)) {
        if (!e.is_regular_file() || e.path().filename() == "provenance.json") continue;
        pairs.emplace_back(e.path(), fs::path(again) / fs::relative(e.path(), loc));
      }
    } else {
      pairs.emplace_back(loc, again);
    }
    for (const auto& [a, b] : pairs) {
      if (!fs::exists(b) || slurp(a) != slurp(b)) return {false, "replay differs: " + a.string()};
      ++compared;
    }
  }

  RngStream rng(808, 0);
  bool qar = true;
  std::size_t arrays = 0;
  for (const Dims& dims : std::vector<Dims>{{7}, {3, 5}, {2, 3, 4}, {2, 1, 3, 5}, {1}}) {
    qar = qar && qar_identity<float>(dims, rng, t / "a.qar") && qar_identity<double>(dims, rng, t / "a.qar") &&
          qar_identity<std::complex<float>>(dims, rng, t / "a.qar") &&
          qar_identity<std::complex<double>>(dims, rng, t / "a.qar");
    arrays += 4;
  }
  return {compared > 0 && qar, fmt("%zu pipelines replayed, %zu output files bit-identical; %zu QAR1 round trips %s",
                                   runs.size(), compared, arrays, qar ? "exact" : "NOT exact")};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<const char*, Verdict (*)()>> criteria{
      {"adjoint correctness", adjoint},        {"NLLS oracle", nlls_oracle},
      {"gradient integrity", gradients},       {"motion-model reductions", motion_reductions},
      {"classical ordering", classical},       {"learned ordering", learned},
      {"RED sanity", red},                     {"determinism", determinism},
  };
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));

  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!only.empty() && !only.count(id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = criteria[i].second();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    const double sec = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("[%s] %d %s: %s (%.1f s)\n", v.pass ? "PASS" : "FAIL", id, criteria[i].first, v.detail.c_str(), sec);
    std::fflush(stdout);
    failed += !v.pass;
  }
  return failed == 0 ? 0 : 1;
}
