#include "qmri/unfold/dataset.hpp"

#include <optional>
#include <thread>

namespace qmri::unfold {

void SimConfig::validate() const {
  phantom.validate();
  require(!accels.empty(), ErrorKind::usage, "sim: accels must not be empty");
  for (long long a : accels) require(a >= 1, ErrorKind::usage, "sim: acceleration must be >= 1");
  require(central_cap >= 1, ErrorKind::usage, "sim: central_cap must be >= 1");
}

void SimConfig::read(const Config& c) {
  phantom.height = c.get("sim.height", phantom.height);
  phantom.width = c.get("sim.width", phantom.width);
  phantom.n_echoes = c.get("sim.echoes", phantom.n_echoes);
  phantom.t1 = c.get("sim.t1", phantom.t1);
  phantom.dt = c.get("sim.dt", phantom.dt);
  phantom.n_coils = c.get("sim.coils", phantom.n_coils);
  phantom.n_ellipses = c.get("sim.ellipses", phantom.n_ellipses);
  accels = c.get_list("sim.accels", accels);
  central_cap = c.get("sim.central_cap", central_cap);
  snr_db = c.get("sim.snr_db", snr_db);
  motion = c.get("sim.motion", motion);
  motion_cfg.l_max = c.get("motion.l_max", motion_cfg.l_max);
  motion_cfg.d_min = c.get("motion.d_min", motion_cfg.d_min);
  motion_cfg.d_max = c.get("motion.d_max", motion_cfg.d_max);
  motion_cfg.a_max = c.get("motion.a_max", motion_cfg.a_max);
  motion_cfg.r_max = c.get("motion.r_max", motion_cfg.r_max);
}

void SimConfig::write(ConfigWriter& w) const {
  w.put("sim.height", phantom.height)
      .put("sim.width", phantom.width)
      .put("sim.echoes", phantom.n_echoes)
      .put("sim.t1", phantom.t1)
      .put("sim.dt", phantom.dt)
      .put("sim.coils", phantom.n_coils)
      .put("sim.ellipses", phantom.n_ellipses)
      .put("sim.accels", accels)
      .put("sim.central_cap", central_cap)
      .put("sim.snr_db", snr_db)
      .put("sim.motion", motion)
      .put("motion.l_max", motion_cfg.l_max)
      .put("motion.d_min", motion_cfg.d_min)
      .put("motion.d_max", motion_cfg.d_max)
      .put("motion.a_max", motion_cfg.a_max)
      .put("motion.r_max", motion_cfg.r_max);
}

Sample make_sample(const SimConfig& cfg, RngStream rng) {
  phantom::PhantomSpec ps = cfg.phantom;
  ps.seed = rng.next_u64();
  ps.stream_id = 0;
  QMaps q = phantom::make_qmaps(ps);
  phantom::CoilMaps coils = phantom::make_coil_maps(ps);
  MGREImage x = phantom::forward_biophysics(q, ps.echo_times());

  RngStream mrng = rng.fork(1);
  const int accel = static_cast<int>(cfg.accels[mrng.uniform_int(0, cfg.accels.size() - 1)]);
  forward::SamplingMask mask = forward::make_mask(ps.height, accel, cfg.central_cap, mrng);
  forward::MeasurementOperator op(std::move(coils), std::move(mask));

  motion::MotionSchedule sched;
  if (cfg.motion) {
    RngStream srng = rng.fork(2);
    sched = motion::sample_schedule(cfg.motion_cfg, ps.height, srng);
  }
  RngStream nrng = rng.fork(3);
  forward::KSpaceSet y = motion::corrupt(op, x, sched, cfg.snr_db, nrng);
  return Sample{std::move(x), std::move(q), std::move(op), std::move(y), std::move(sched), accel};
}

std::vector<Sample> make_dataset(const SimConfig& cfg, std::size_t count, std::uint64_t seed, std::uint64_t stream,
                                 std::size_t workers) {
  cfg.validate();
  const RngStream root(seed, stream);
  std::vector<std::optional<Sample>> slots(count);
  workers = std::max<std::size_t>(1, std::min(workers, count));
  auto run = [&](std::size_t w) {
    for (std::size_t j = w; j < count; j += workers) slots[j].emplace(make_sample(cfg, root.fork(j)));
  };
  if (workers == 1) {
    run(0);
  } else {
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errs(workers);
    for (std::size_t w = 0; w < workers; ++w)
      pool.emplace_back([&, w] {
        try {
          run(w);
        } catch (...) {
          errs[w] = std::current_exception();
        }
      });
    for (auto& t : pool) t.join();
    for (auto& e : errs)
      if (e) std::rethrow_exception(e);
  }
  std::vector<Sample> out;
  out.reserve(count);
  for (auto& s : slots) out.push_back(std::move(*s));
  return out;
}

}  // namespace qmri::unfold
