#pragma once

#include <filesystem>
#include <functional>
#include <string>

#include "qmri/core/config.hpp"
#include "qmri/unfold/dataset.hpp"
#include "qmri/unfold/unfold.hpp"

namespace qmri::unfold {

struct TrainConfig {
  double lambda = 1.0;
  double lr = 1e-5;          // initial rate
  double lr_final = -1.0;    // cosine decay to this rate over the run; < 0 keeps lr constant
  std::size_t epochs = 5;
  std::size_t batch_size = 1;
  std::size_t train_slices = 64;
  std::uint64_t seed = 7;
  std::size_t workers = 1;

  SimConfig sim;
  UnfoldSpec unfold;
  nn::DenoiserSpec denoiser;
  nn::EstimatorSpec estimator;

  std::filesystem::path out_dir;  // empty: no curve file, no checkpoints

  void validate() const;
  static TrainConfig from_config(const Config& c);
  std::string dump() const;
};

struct StepLog {
  std::size_t step, epoch;
  double loss, rec, est;
};

struct TrainResult {
  std::unique_ptr<CorrectNet> net;
  std::vector<StepLog> curve;
};

// Minimizes Σ_j L_rec + λ·L_est with Adam over `data`. Writes
// <out_dir>/curve.tsv and <out_dir>/epoch_<e>/ checkpoints when out_dir is set.
TrainResult train(const TrainConfig& cfg, const std::vector<Sample>& data,
                  const std::function<void(const StepLog&)>& on_step = {});

// One sample's L_rec + λ·L_est with the graph attached.
struct LossParts {
  nn::Tensor total;
  double rec, est;
};
LossParts sample_loss(const CorrectNet& net, const Sample& s, double lambda);

// Plain denoiser training on (x + σ·noise, x) echo slabs, where σ is
// sigma_pct/100 of the slice's mean first-echo magnitude.
struct DenoiserTrainConfig {
  nn::DenoiserSpec spec;
  double sigma_pct = 5.0;
  double lr = 1e-3;
  std::size_t steps = 200;
  std::uint64_t seed = 11;
};
struct DenoiserModel {
  nn::ParamStore params;
  std::unique_ptr<nn::Denoiser> net;
};
DenoiserModel train_denoiser(const DenoiserTrainConfig& cfg, const std::vector<MGREImage>& images);

}  // namespace qmri::unfold
