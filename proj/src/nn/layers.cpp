#include "qmri/nn/layers.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "qmri/core/qar.hpp"

namespace qmri::nn {

Tensor& ParamStore::add(std::string name, Shape shape, std::vector<double> values, std::string init) {
  for (const auto& p : params_)
    require(p.name != name, ErrorKind::usage, "ParamStore: duplicate parameter '" + name + "'");
  params_.push_back({std::move(name), Tensor::parameter(std::move(shape), std::move(values)), std::move(init)});
  return params_.back().value;
}

Tensor& ParamStore::add_he_uniform(std::string name, Shape shape, std::size_t fan_in, RngStream& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  std::vector<double> v(shape_size(shape));
  for (auto& x : v) x = rng.uniform(-bound, bound);
  return add(std::move(name), std::move(shape), std::move(v), "he_uniform");
}

Tensor& ParamStore::add_constant(std::string name, Shape shape, double c) {
  std::vector<double> v(shape_size(shape), c);
  std::ostringstream tag;
  if (c == 0.0)
    tag << "zero";
  else
    tag << "const:" << c;
  return add(std::move(name), std::move(shape), std::move(v), tag.str());
}

Tensor& ParamStore::at(const std::string& name) {
  for (auto& p : params_)
    if (p.name == name) return p.value;
  fail(ErrorKind::usage, "ParamStore: no parameter '" + name + "'");
}

const Tensor& ParamStore::at(const std::string& name) const {
  return const_cast<ParamStore*>(this)->at(name);
}

std::size_t ParamStore::count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

void ParamStore::zero_grad() {
  for (auto& p : params_) p.value.zero_grad();
}

void ParamStore::assign(const ParamStore& other) {
  require(other.params_.size() == params_.size(), ErrorKind::shape, "ParamStore::assign: parameter count differs");
  for (std::size_t i = 0; i < params_.size(); ++i) {
    require(params_[i].name == other.params_[i].name && params_[i].value.shape() == other.params_[i].value.shape(),
            ErrorKind::shape, "ParamStore::assign: mismatch at '" + params_[i].name + "'");
    auto dst = params_[i].value.mutable_values();
    auto src = other.params_[i].value.values();
    std::copy(src.begin(), src.end(), dst.begin());
  }
}

Conv make_conv(ParamStore& store, const std::string& name, std::size_t ci, std::size_t co, RngStream& rng,
               bool zero_init) {
  Conv c;
  if (zero_init)
    c.w = store.add_constant(name + ".w", {co, ci, 3, 3}, 0.0);
  else
    c.w = store.add_he_uniform(name + ".w", {co, ci, 3, 3}, ci * 9, rng);
  c.b = store.add_constant(name + ".b", {co}, 0.0);
  return c;
}

// ---------------------------------------------------------------- denoiser

void DenoiserSpec::validate() const {
  require(layers >= 2, ErrorKind::usage, "denoiser: need at least 2 layers");
  require(filters >= 1 && channels >= 1, ErrorKind::usage, "denoiser: filters and channels must be positive");
}

std::size_t DenoiserSpec::parameter_count() const {
  return conv_param_count(channels, filters) + (layers - 2) * conv_param_count(filters, filters) +
         conv_param_count(filters, channels);
}

Denoiser::Denoiser(const DenoiserSpec& spec, ParamStore& store, RngStream& rng, const std::string& prefix)
    : spec_(spec) {
  spec_.validate();
  for (std::size_t l = 0; l < spec_.layers; ++l) {
    const std::size_t ci = l == 0 ? spec_.channels : spec_.filters;
    const std::size_t co = l + 1 == spec_.layers ? spec_.channels : spec_.filters;
    const bool last = l + 1 == spec_.layers;
    convs_.push_back(make_conv(store, prefix + ".conv" + std::to_string(l), ci, co, rng, last && spec_.zero_init_last));
  }
}

Tensor Denoiser::forward(const Tensor& x) const {
  require(x.shape().size() == 4 && x.dim(1) == spec_.channels, ErrorKind::shape,
          "denoiser: expected (B," + std::to_string(spec_.channels) + ",H,W), got " + shape_string(x.shape()));
  Tensor h = x;
  const std::size_t n = convs_.size();
  for (std::size_t l = 0; l < n; ++l) {
    const bool first = l == 0, last = l + 1 == n;
    bool act;
    if (spec_.pattern == ActivationPattern::literal)
      act = first || last;
    else
      act = !last;
    h = convs_[l](h, act ? Activation::relu : Activation::none);
  }
  return spec_.residual ? sub(x, h) : h;
}

// --------------------------------------------------------------- estimator

void EstimatorSpec::validate() const {
  require(in_channels >= 1, ErrorKind::usage, "estimator: in_channels must be positive");
  require(width > 0.0, ErrorKind::usage, "estimator: width must be positive");
  require(enc_filters.size() == 5 && dec_filters.size() == 4, ErrorKind::usage,
          "estimator: expected 5 encoder and 4 decoder filter counts");
  require(r2s_scale > 0.0, ErrorKind::usage, "estimator: r2s_scale must be positive");
  for (std::size_t i = 0; i < 4; ++i)
    require(dec(i) == enc(3 - i), ErrorKind::usage, "estimator: decoder widths must mirror the encoder skips");
}

std::size_t EstimatorSpec::enc(std::size_t i) const {
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(enc_filters.at(i) * width)));
}

std::size_t EstimatorSpec::dec(std::size_t i) const {
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(dec_filters.at(i) * width)));
}

std::size_t EstimatorSpec::parameter_count() const {
  std::size_t n = 0, prev = in_channels;
  for (std::size_t i = 0; i < 5; ++i) {
    n += conv_param_count(prev, enc(i)) + conv_param_count(enc(i), enc(i));
    prev = enc(i);
  }
  for (std::size_t i = 0; i < 4; ++i) {
    n += conv_param_count(prev, dec(i)) + conv_param_count(2 * dec(i), dec(i));
    prev = dec(i);
  }
  return n + conv_param_count(prev, 2);
}

Estimator::Estimator(const EstimatorSpec& spec, ParamStore& store, RngStream& rng, const std::string& prefix)
    : spec_(spec) {
  spec_.validate();
  std::size_t prev = spec_.in_channels;
  for (std::size_t i = 0; i < 5; ++i) {
    const std::string p = prefix + ".enc" + std::to_string(i);
    Conv a = make_conv(store, p + ".a", prev, spec_.enc(i), rng);
    Conv b = make_conv(store, p + ".b", spec_.enc(i), spec_.enc(i), rng);
    enc_.emplace_back(a, b);
    prev = spec_.enc(i);
  }
  for (std::size_t i = 0; i < 4; ++i) {
    const std::string p = prefix + ".dec" + std::to_string(i);
    Conv up = make_conv(store, p + ".up", prev, spec_.dec(i), rng);
    Conv fuse = make_conv(store, p + ".fuse", 2 * spec_.dec(i), spec_.dec(i), rng);
    dec_.emplace_back(up, fuse);
    prev = spec_.dec(i);
  }
  out_ = make_conv(store, prefix + ".out", prev, 2, rng);
  out_.b.mutable_values()[1] = spec_.r2s_bias_init;
  std::ostringstream tag;
  tag << "const:0," << spec_.r2s_bias_init;
  store.params().back().init = tag.str();
}

EstimatorOutput Estimator::forward(const Tensor& mag) const {
  require(mag.shape().size() == 4 && mag.dim(0) == 1 && mag.dim(1) == spec_.in_channels, ErrorKind::shape,
          "estimator: expected (1," + std::to_string(spec_.in_channels) + ",H,W), got " + shape_string(mag.shape()));
  const std::size_t h = mag.dim(2), w = mag.dim(3);
  const std::size_t hp = (h + 15) / 16 * 16, wp = (w + 15) / 16 * 16;

  Tensor t = pad_to(mag, hp, wp);
  std::vector<Tensor> skips;
  for (std::size_t i = 0; i < enc_.size(); ++i) {
    if (i > 0) t = maxpool2(t);
    t = enc_[i].first(t, Activation::relu);
    t = enc_[i].second(t, Activation::relu);
    skips.push_back(t);
  }
  for (std::size_t i = 0; i < dec_.size(); ++i) {
    t = dec_[i].first(upsample2(t), Activation::relu);
    t = dec_[i].second(concat_channels(skips[3 - i], t), Activation::relu);
  }
  t = crop_to(out_(t, Activation::none), h, w);
  return {select_channel(t, 0), scale(relu(select_channel(t, 1)), spec_.r2s_scale)};
}

// -------------------------------------------------------------------- adam

void adam_step(AdamState& s, ParamStore& store) {
  auto& ps = store.params();
  if (s.m.size() != ps.size()) {
    s.m.assign(ps.size(), {});
    s.v.assign(ps.size(), {});
    for (std::size_t i = 0; i < ps.size(); ++i) {
      s.m[i].assign(ps[i].value.size(), 0.0);
      s.v[i].assign(ps[i].value.size(), 0.0);
    }
  }
  for (std::size_t i = 0; i < ps.size(); ++i) {
    auto g = ps[i].value.grad();
    for (double x : g)
      require(std::isfinite(x), ErrorKind::numeric,
              "adam: non-finite gradient in '" + ps[i].name + "' at step " + std::to_string(s.step + 1));
  }
  ++s.step;
  const double c1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.step));
  const double c2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.step));
  for (std::size_t i = 0; i < ps.size(); ++i) {
    auto g = ps[i].value.grad();
    auto x = ps[i].value.mutable_values();
    auto& m = s.m[i];
    auto& v = s.v[i];
    for (std::size_t j = 0; j < x.size(); ++j) {
      const double gj = g.empty() ? 0.0 : g[j];
      m[j] = s.beta1 * m[j] + (1.0 - s.beta1) * gj;
      v[j] = s.beta2 * v[j] + (1.0 - s.beta2) * gj * gj;
      x[j] -= s.lr * (m[j] / c1) / (std::sqrt(v[j] / c2) + s.eps);
    }
  }
}

// -------------------------------------------------------------- checkpoint

namespace {

std::string file_for(const std::string& name) { return name + ".qar"; }

}  // namespace

void save_checkpoint(const ParamStore& store, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  require(!ec, ErrorKind::io, "checkpoint: cannot create " + dir.string() + ": " + ec.message());
  std::ostringstream manifest;
  manifest << "# name file shape init\n";
  for (const auto& p : store.params()) {
    Dims d(p.value.shape().begin(), p.value.shape().end());
    RealGrid g(d);
    std::copy(p.value.values().begin(), p.value.values().end(), g.data());
    write_real(dir / file_for(p.name), g);
    manifest << p.name << ' ' << file_for(p.name) << ' ' << dims_to_string(d) << ' ' << p.init << '\n';
  }
  write_file_atomic(dir / "manifest.txt", manifest.str());
}

void load_checkpoint(ParamStore& store, const std::filesystem::path& dir) {
  std::ifstream in(dir / "manifest.txt");
  require(static_cast<bool>(in), ErrorKind::io, "checkpoint: missing " + (dir / "manifest.txt").string());
  std::string line;
  std::size_t loaded = 0;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string name, file;
    ls >> name >> file;
    Tensor& t = store.at(name);
    RealGrid g = read_real(dir / file);
    require(Shape(g.dims().begin(), g.dims().end()) == t.shape(), ErrorKind::shape,
            "checkpoint: shape mismatch for '" + name + "'");
    std::copy(g.data(), g.data() + g.size(), t.mutable_values().begin());
    ++loaded;
  }
  require(loaded == store.params().size(), ErrorKind::io,
          "checkpoint: manifest lists " + std::to_string(loaded) + " of " + std::to_string(store.params().size()) +
              " parameters");
}

}  // namespace qmri::nn
