#include "qmri/motion/motion.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numbers>
#include <optional>
#include <sstream>

#include "qmri/core/qar.hpp"
#include "qmri/fft/fft2.hpp"

namespace qmri::motion {

namespace {

constexpr int kMaxPlacementAttempts = 10000;

// Bilinear rotation about the grid center; samples outside the grid are zero.
void rotate_slab(std::span<const cplx> in, std::span<cplx> out, std::size_t h, std::size_t w,
                 double degrees) {
  const double th = degrees * std::numbers::pi / 180.0;
  const double ct = std::cos(th), st = std::sin(th);
  const double cy = 0.5 * static_cast<double>(h - 1), cx = 0.5 * static_cast<double>(w - 1);
  auto at = [&](long r, long c) -> cplx {
    if (r < 0 || c < 0 || r >= static_cast<long>(h) || c >= static_cast<long>(w)) return {};
    return in[static_cast<std::size_t>(r) * w + static_cast<std::size_t>(c)];
  };
  for (std::size_t r = 0; r < h; ++r) {
    const double v = static_cast<double>(r) - cy;
    for (std::size_t c = 0; c < w; ++c) {
      const double u = static_cast<double>(c) - cx;
      const double sc = cx + ct * u + st * v;
      const double sr = cy - st * u + ct * v;
      const double fr = std::floor(sr), fc = std::floor(sc);
      const double ar = sr - fr, ac = sc - fc;
      const long r0 = static_cast<long>(fr), c0 = static_cast<long>(fc);
      out[r * w + c] = (1 - ar) * ((1 - ac) * at(r0, c0) + ac * at(r0, c0 + 1)) +
                       ar * ((1 - ac) * at(r0 + 1, c0) + ac * at(r0 + 1, c0 + 1));
    }
  }
}

// Subpixel circular shift by a Fourier phase ramp on the centered spectrum.
void translate_slab(std::span<cplx> slab, std::size_t h, std::size_t w, double dx, double dy, Fft2& fft) {
  fft.forward(slab);
  const double two_pi = 2.0 * std::numbers::pi;
  for (std::size_t r = 0; r < h; ++r) {
    const double ky = static_cast<double>(r) - static_cast<double>(h / 2);
    for (std::size_t c = 0; c < w; ++c) {
      const double kx = static_cast<double>(c) - static_cast<double>(w / 2);
      const double ph = -two_pi * (kx * dx / static_cast<double>(w) + ky * dy / static_cast<double>(h));
      slab[r * w + c] *= cplx(std::cos(ph), std::sin(ph));
    }
  }
  fft.inverse(slab);
}

}  // namespace

void RigidMotion::validate(std::size_t h, std::size_t w, double max_angle) const {
  require(std::isfinite(dx) && std::isfinite(dy) && std::isfinite(angle), ErrorKind::domain,
          "RigidMotion: non-finite parameter");
  require(std::abs(dx) <= static_cast<double>(w) / 4.0 && std::abs(dy) <= static_cast<double>(h) / 4.0,
          ErrorKind::domain, "RigidMotion: translation exceeds a quarter of the grid");
  require(std::abs(angle) <= max_angle, ErrorKind::domain,
          "RigidMotion: |angle| must be <= " + std::to_string(static_cast<int>(max_angle)) + " degrees");
}

void MotionSchedule::validate(std::size_t h, std::size_t w) const {
  std::vector<std::pair<std::size_t, std::size_t>> blocks;
  for (const auto& e : events) {
    e.transform.validate(h, w);
    require(e.length > 0 && e.start + e.length <= h, ErrorKind::domain,
            "motion schedule: event lines outside [0, " + std::to_string(h) + ")");
    blocks.emplace_back(e.start, e.start + e.length);
  }
  std::sort(blocks.begin(), blocks.end());
  for (std::size_t i = 1; i < blocks.size(); ++i)
    require(blocks[i].first >= blocks[i - 1].second, ErrorKind::domain, "motion schedule: overlapping events");
}

ComplexGrid apply_rigid(const ComplexGrid& x, const RigidMotion& m) {
  require(x.ndim() == 3, ErrorKind::shape, "apply_rigid: expected (N,H,W)");
  const std::size_t n = x.dim(0), h = x.dim(1), w = x.dim(2);
  m.validate(h, w, 180.0);
  if (m.is_identity()) return x;
  ComplexGrid out = x;
  std::optional<Fft2> fft;
  if (m.dx != 0.0 || m.dy != 0.0) fft.emplace(h, w);
  for (std::size_t e = 0; e < n; ++e) {
    std::span<cplx> slab = out.slab(e);
    if (m.angle != 0.0) rotate_slab(x.slab(e), slab, h, w, m.angle);
    if (fft) translate_slab(slab, h, w, m.dx, m.dy, *fft);
  }
  return out;
}

MGREImage apply_rigid(const MGREImage& x, const RigidMotion& m) {
  return MGREImage{apply_rigid(x.data, m), x.echo_times};
}

MotionSchedule sample_schedule(const MotionConfig& cfg, std::size_t h, RngStream& rng) {
  require(cfg.d_min > 0.0 && cfg.d_min <= cfg.d_max && cfg.d_max <= 1.0, ErrorKind::usage,
          "motion config: need 0 < d_min <= d_max <= 1");
  require(cfg.a_max >= 0.0 && cfg.r_max >= 0.0, ErrorKind::usage, "motion config: negative amplitude");
  MotionSchedule s;
  if (cfg.l_max == 0) return s;
  require(static_cast<double>(cfg.l_max) * cfg.d_max <= 0.8, ErrorKind::domain,
          "motion config: infeasible disjointness (total duration may exceed 80% of lines)");

  const auto count = static_cast<std::size_t>(rng.uniform_int(1, cfg.l_max));
  for (std::size_t l = 0; l < count; ++l) {
    MotionEvent e;
    e.duration = rng.uniform(cfg.d_min, cfg.d_max);
    e.length = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(e.duration * static_cast<double>(h))));
    e.transform.dx = rng.uniform(-cfg.a_max, cfg.a_max);
    e.transform.dy = rng.uniform(-cfg.a_max, cfg.a_max);
    e.transform.angle = rng.uniform(-cfg.r_max, cfg.r_max);
    s.events.push_back(e);
  }
  // Block lengths are fixed above; only placements are redrawn until disjoint.
  for (int attempt = 0;; ++attempt) {
    require(attempt < kMaxPlacementAttempts, ErrorKind::domain, "motion schedule: could not place disjoint blocks");
    for (auto& e : s.events) e.start = static_cast<std::size_t>(rng.uniform_int(0, h - e.length));
    bool ok = true;
    for (std::size_t i = 0; i < s.events.size() && ok; ++i)
      for (std::size_t j = i + 1; j < s.events.size() && ok; ++j) {
        const auto& a = s.events[i];
        const auto& b = s.events[j];
        ok = a.start + a.length <= b.start || b.start + b.length <= a.start;
      }
    if (ok) break;
  }
  return s;
}

forward::KSpaceSet corrupt(const forward::MeasurementOperator& op, const MGREImage& x,
                           const MotionSchedule& sched, double snr_db, RngStream& rng) {
  const std::size_t h = op.height(), w = op.width();
  sched.validate(h, w);
  forward::KSpaceSet y = op.apply(x);
  const std::size_t nc = y.data.dim(0), ne = y.data.dim(1);
  for (const auto& ev : sched.events) {
    const ComplexGrid moved = op.apply(apply_rigid(x.data, ev.transform));
    for (std::size_t i = 0; i < nc; ++i)
      for (std::size_t e = 0; e < ne; ++e)
        for (std::size_t r = ev.start; r < ev.start + ev.length; ++r)
          std::copy_n(&moved(i, e, r, 0), w, &y.data(i, e, r, 0));
  }
  return forward::add_noise(y, snr_db, rng);
}

std::string format_schedule(const MotionSchedule& s) {
  std::ostringstream os;
  os.precision(17);
  os << "# start len dx dy angle\n";
  for (const auto& e : s.events)
    os << e.start << ' ' << e.length << ' ' << e.transform.dx << ' ' << e.transform.dy << ' '
       << e.transform.angle << '\n';
  return os.str();
}

MotionSchedule parse_schedule(const std::string& text) {
  MotionSchedule s;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    MotionEvent e;
    if (!(ls >> e.start >> e.length >> e.transform.dx >> e.transform.dy >> e.transform.angle))
      fail(ErrorKind::io, "motion schedule: malformed line: " + line);
    s.events.push_back(e);
  }
  return s;
}

void write_schedule(const std::filesystem::path& path, const MotionSchedule& s) {
  write_file_atomic(path, format_schedule(s));
}

MotionSchedule read_schedule(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) fail(ErrorKind::io, "missing input file: " + path.string());
  return parse_schedule(std::string(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()));
}

}  // namespace qmri::motion
