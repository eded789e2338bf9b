#include "qmri/unfold/train.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>
#include <numeric>
#include <sstream>

#include "qmri/core/qar.hpp"

namespace qmri::unfold {

using nn::Tensor;

void TrainConfig::validate() const {
  require(lambda >= 0.0, ErrorKind::usage, "train: lambda must be >= 0");
  require(lr >= 0.0, ErrorKind::usage, "train: lr must be >= 0");
  require(lr_final < 0.0 || lr_final <= lr, ErrorKind::usage, "train: lr_final must not exceed lr");
  require(batch_size >= 1, ErrorKind::usage, "train: batch_size must be >= 1");
  require(train_slices >= 1, ErrorKind::usage, "train: need at least one training slice");
  sim.validate();
  unfold.validate();
  denoiser.validate();
  estimator.validate();
  require(estimator.in_channels == sim.phantom.n_echoes, ErrorKind::usage,
          "train: estimator input channels must equal the echo count");
}

TrainConfig TrainConfig::from_config(const Config& c) {
  TrainConfig t;
  t.lambda = c.get("train.lambda", t.lambda);
  t.lr = c.get("train.lr", t.lr);
  t.lr_final = c.get("train.lr_final", t.lr_final);
  t.epochs = c.get("train.epochs", t.epochs);
  t.batch_size = c.get("train.batch_size", t.batch_size);
  t.train_slices = c.get("train.slices", t.train_slices);
  t.seed = c.get("seed", std::size_t{t.seed});
  t.workers = c.get("workers", t.workers);
  t.sim.read(c);
  t.unfold.k_steps = c.get("unfold.k_steps", t.unfold.k_steps);
  t.unfold.gamma = c.get("unfold.gamma", t.unfold.gamma);
  t.unfold.tau_init = c.get("unfold.tau_init", t.unfold.tau_init);
  t.denoiser.layers = c.get("denoiser.layers", t.denoiser.layers);
  t.denoiser.filters = c.get("denoiser.filters", t.denoiser.filters);
  t.denoiser.residual = c.get("denoiser.residual", t.denoiser.residual);
  t.denoiser.zero_init_last = c.get("denoiser.zero_init_last", t.denoiser.zero_init_last);
  const std::string pat = c.get("denoiser.activation", std::string("conventional"));
  if (pat == "literal")
    t.denoiser.pattern = nn::ActivationPattern::literal;
  else if (pat == "conventional")
    t.denoiser.pattern = nn::ActivationPattern::conventional;
  else
    fail(ErrorKind::usage, "config: denoiser.activation must be literal or conventional, got '" + pat + "'");
  t.estimator.width = c.get("estimator.width", t.estimator.width);
  t.estimator.r2s_scale = c.get("estimator.r2s_scale", t.estimator.r2s_scale);
  t.estimator.r2s_bias_init = c.get("estimator.r2s_bias_init", t.estimator.r2s_bias_init);
  t.estimator.in_channels = t.sim.phantom.n_echoes;
  const std::string out = c.get("out_dir", std::string());
  t.out_dir = out;
  return t;
}

std::string TrainConfig::dump() const {
  ConfigWriter w;
  w.comment("training")
      .put("train.lambda", lambda)
      .put("train.lr", lr)
      .put("train.lr_final", lr_final)
      .put("train.epochs", epochs)
      .put("train.batch_size", batch_size)
      .put("train.slices", train_slices)
      .put("seed", std::size_t{seed})
      .put("workers", workers);
  w.comment("simulation");
  sim.write(w);
  w.comment("unrolled reconstruction")
      .put("unfold.k_steps", unfold.k_steps)
      .put("unfold.gamma", unfold.gamma)
      .put("unfold.tau_init", unfold.tau_init)
      .put("denoiser.layers", denoiser.layers)
      .put("denoiser.filters", denoiser.filters)
      .put("denoiser.residual", denoiser.residual)
      .put("denoiser.zero_init_last", denoiser.zero_init_last)
      .put("denoiser.activation",
           std::string(denoiser.pattern == nn::ActivationPattern::literal ? "literal" : "conventional"));
  w.comment("estimator")
      .put("estimator.width", estimator.width)
      .put("estimator.r2s_scale", estimator.r2s_scale)
      .put("estimator.r2s_bias_init", estimator.r2s_bias_init);
  if (!out_dir.empty()) w.put("out_dir", out_dir.string());
  return w.str();
}

LossParts sample_loss(const CorrectNet& net, const Sample& s, double lambda) {
  Tensor x_hat = r_theta(net, s.op, s.y);
  Tensor rec = loss_rec(x_hat, to_tensor(s.x.data));
  if (lambda == 0.0) return {rec, rec.item(), 0.0};
  Tensor est = loss_est(e_phi(net.estimator(), x_hat), s.x.data, s.x.echo_times, s.maps.f_of_t, s.maps.rem);
  return {nn::add(rec, nn::scale(est, lambda)), rec.item(), est.item()};
}

namespace {

void check_sample(const TrainConfig& cfg, const Sample& s, std::size_t j) {
  const auto& p = cfg.sim.phantom;
  const Dims want{p.n_echoes, p.height, p.width};
  require(s.x.data.dims() == want && s.op.height() == p.height && s.op.width() == p.width &&
              s.y.data.dims() == Dims({s.op.coils().coils(), p.n_echoes, p.height, p.width}),
          ErrorKind::shape, "train: sample " + std::to_string(j) + " does not match the configured grid/operator");
}

std::string format_curve(const std::vector<StepLog>& curve) {
  std::ostringstream out;
  out << "step\tepoch\tloss\trec\test\n";
  char buf[160];
  for (const auto& s : curve) {
    std::snprintf(buf, sizeof buf, "%zu\t%zu\t%.10e\t%.10e\t%.10e\n", s.step, s.epoch, s.loss, s.rec, s.est);
    out << buf;
  }
  return out.str();
}

void shuffle(std::vector<std::size_t>& v, RngStream& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.uniform_int(0, i - 1)]);
}

}  // namespace

TrainResult train(const TrainConfig& cfg, const std::vector<Sample>& data,
                  const std::function<void(const StepLog&)>& on_step) {
  cfg.validate();
  require(!data.empty(), ErrorKind::domain, "train: empty dataset");
  for (std::size_t j = 0; j < data.size(); ++j) check_sample(cfg, data[j], j);

  TrainResult res;
  res.net = std::make_unique<CorrectNet>(cfg.unfold, cfg.denoiser, cfg.estimator, cfg.seed);
  CorrectNet& net = *res.net;
  nn::AdamState adam;
  adam.lr = cfg.lr;
  RngStream order_rng(cfg.seed, 0x0de5);

  std::vector<std::size_t> order(data.size());
  const std::size_t per_epoch = (data.size() + cfg.batch_size - 1) / cfg.batch_size;
  const double total = static_cast<double>(per_epoch * cfg.epochs);
  std::size_t step = 0;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    shuffle(order, order_rng);
    for (std::size_t b = 0; b < order.size(); b += cfg.batch_size) {
      const std::size_t nb = std::min(cfg.batch_size, order.size() - b);
      net.params().zero_grad();
      StepLog log{++step, epoch, 0.0, 0.0, 0.0};
      for (std::size_t i = 0; i < nb; ++i) {
        LossParts lp = sample_loss(net, data[order[b + i]], cfg.lambda);
        const double v = lp.total.item();
        require(std::isfinite(v), ErrorKind::numeric,
                "train: non-finite loss at step " + std::to_string(step) + " (sample " +
                    std::to_string(order[b + i]) + ")");
        nn::backward(nn::scale(lp.total, 1.0 / static_cast<double>(nb)));
        log.loss += v / nb;
        log.rec += lp.rec / nb;
        log.est += lp.est / nb;
      }
      if (cfg.lr_final >= 0.0)
        adam.lr = cfg.lr_final + 0.5 * (cfg.lr - cfg.lr_final) *
                                     (1.0 + std::cos(std::numbers::pi * static_cast<double>(step - 1) / total));
      nn::adam_step(adam, net.params());
      res.curve.push_back(log);
      if (on_step) on_step(log);
    }
    if (!cfg.out_dir.empty()) {
      char name[32];
      std::snprintf(name, sizeof name, "epoch_%03zu", epoch);
      nn::save_checkpoint(net.params(), cfg.out_dir / name);
      write_file_atomic(cfg.out_dir / "curve.tsv", format_curve(res.curve));
    }
  }
  return res;
}

DenoiserModel train_denoiser(const DenoiserTrainConfig& cfg, const std::vector<MGREImage>& images) {
  require(!images.empty(), ErrorKind::domain, "train_denoiser: no images");
  require(cfg.sigma_pct >= 0.0, ErrorKind::usage, "train_denoiser: sigma must be >= 0");
  DenoiserModel m;
  RngStream rng(cfg.seed, 0xd0);
  RngStream init = rng.fork(1), pick = rng.fork(2), noise = rng.fork(3);
  m.net = std::make_unique<nn::Denoiser>(cfg.spec, m.params, init, "dnn");
  nn::AdamState adam;
  adam.lr = cfg.lr;
  for (std::size_t step = 0; step < cfg.steps; ++step) {
    const MGREImage& x = images[pick.uniform_int(0, images.size() - 1)];
    const std::size_t hw = x.height() * x.width();
    double s = 0.0;
    for (std::size_t i = 0; i < hw; ++i) s += std::abs(x.data[i]);
    const double sigma = cfg.sigma_pct / 100.0 * s / static_cast<double>(hw);
    Tensor clean = to_tensor(x.data);
    std::vector<double> nv(clean.values().begin(), clean.values().end());
    for (auto& v : nv) v += sigma * noise.normal();
    Tensor noisy = Tensor::constant(clean.shape(), std::move(nv));
    m.params.zero_grad();
    Tensor loss = loss_rec(m.net->forward(noisy), clean);
    require(std::isfinite(loss.item()), ErrorKind::numeric, "train_denoiser: non-finite loss");
    nn::backward(loss);
    nn::adam_step(adam, m.params);
  }
  return m;
}

}  // namespace qmri::unfold
