#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "qmri/core/rng.hpp"
#include "qmri/nn/ops.hpp"

namespace qmri::nn {

struct Param {
  std::string name;
  Tensor value;
  std::string init;  // "he_uniform", "zero", "const:<v>", ...
};

// Ordered, named collection of trainable tensors.
class ParamStore {
 public:
  Tensor& add(std::string name, Shape shape, std::vector<double> values, std::string init);
  Tensor& add_he_uniform(std::string name, Shape shape, std::size_t fan_in, RngStream& rng);
  Tensor& add_constant(std::string name, Shape shape, double v);

  std::vector<Param>& params() { return params_; }
  const std::vector<Param>& params() const { return params_; }
  Tensor& at(const std::string& name);
  const Tensor& at(const std::string& name) const;
  std::size_t count() const;  // scalar parameters
  void zero_grad();
  // Copies values from a store with identical names and shapes.
  void assign(const ParamStore& other);

 private:
  std::vector<Param> params_;
};

struct Conv {
  Tensor w, b;
  Tensor operator()(const Tensor& x, Activation act) const { return conv2d(x, w, b, act); }
};

Conv make_conv(ParamStore& store, const std::string& name, std::size_t ci, std::size_t co, RngStream& rng,
               bool zero_init = false);
inline std::size_t conv_param_count(std::size_t ci, std::size_t co) { return co * ci * 9 + co; }

// Where the denoiser applies ReLU:
//   literal       first and last conv
//   conventional  every conv but the last
enum class ActivationPattern { literal, conventional };

struct DenoiserSpec {
  std::size_t layers = 7;
  std::size_t filters = 64;
  std::size_t channels = 2;  // re, im
  bool residual = true;
  ActivationPattern pattern = ActivationPattern::conventional;
  bool zero_init_last = true;

  void validate() const;
  std::size_t parameter_count() const;
};

class Denoiser {
 public:
  Denoiser(const DenoiserSpec& spec, ParamStore& store, RngStream& rng, const std::string& prefix = "dnn");

  const DenoiserSpec& spec() const { return spec_; }
  // x (B, channels, H, W) -> same shape.
  Tensor forward(const Tensor& x) const;

 private:
  DenoiserSpec spec_;
  std::vector<Conv> convs_;
};

struct EstimatorSpec {
  std::size_t in_channels = 10;  // echoes
  double width = 0.25;
  std::vector<std::size_t> enc_filters{64, 128, 256, 512, 1024};
  std::vector<std::size_t> dec_filters{512, 256, 128, 64};
  double r2s_scale = 100.0;     // 1/s per unit of network output
  double r2s_bias_init = 0.3;   // keeps the R2* ReLU active at start

  void validate() const;
  std::size_t enc(std::size_t i) const;
  std::size_t dec(std::size_t i) const;
  std::size_t parameter_count() const;
};

struct EstimatorOutput {
  Tensor x0;   // (1, 1, H, W)
  Tensor r2s;  // (1, 1, H, W), >= 0
};

// Encoder: per block two conv+ReLU, then 2x2 max-pool between blocks.
// Decoder: nearest upsample, conv+ReLU, concat skip, conv+ReLU.
// Output: one conv to (x0, r2s); r2s = relu(.) * r2s_scale.
class Estimator {
 public:
  Estimator(const EstimatorSpec& spec, ParamStore& store, RngStream& rng, const std::string& prefix = "est");

  const EstimatorSpec& spec() const { return spec_; }
  // mag (1, in_channels, H, W); H and W need not be multiples of 16.
  EstimatorOutput forward(const Tensor& mag) const;

 private:
  EstimatorSpec spec_;
  std::vector<std::pair<Conv, Conv>> enc_;
  std::vector<std::pair<Conv, Conv>> dec_;
  Conv out_;
};

struct AdamState {
  double lr = 1e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::size_t step = 0;
  std::vector<std::vector<double>> m, v;
};

// One Adam update with bias correction. A missing gradient counts as zero.
void adam_step(AdamState& state, ParamStore& store);

// Directory of QAR1 arrays plus manifest.txt ("name file shape init").
void save_checkpoint(const ParamStore& store, const std::filesystem::path& dir);
void load_checkpoint(ParamStore& store, const std::filesystem::path& dir);

}  // namespace qmri::nn
