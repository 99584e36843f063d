// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <memory>
#include <string>

#include "cigan/config.hpp"
#include "cigan/dataset.hpp"
#include "cigan/discriminator.hpp"
#include "cigan/encoder.hpp"
#include "cigan/generator.hpp"
#include "cigan/losses.hpp"
#include "cigan/optim.hpp"
#include "cigan/spectral_norm.hpp"

namespace cigan::train {

using Real = float;

// Aborting on a non-finite loss carries the most recent checkpoint so a run
// can be inspected or resumed from the last good state.
struct TrainingAbort : std::runtime_error {
  TrainingAbort(const std::string& msg, std::string ckpt)
      : std::runtime_error(msg), last_checkpoint(std::move(ckpt)) {}
  std::string last_checkpoint;
};

// Everything a training run mutates: the three trainable networks, the frozen
// backbone, optimizers, spectral-norm state and the rng stream.
struct TrainState {
  TrainConfig cfg;

  nn::ParameterStore<Real> backbone_store;
  std::unique_ptr<nn::VggEncoder<Real>> encoder;

  nn::ParameterStore<Real> gen_store, dl_store, dn_store;
  nn::SpectralNorm<Real> sn_gen, sn_dl, sn_dn;
  nn::GeneratorGL<Real> gl;
  nn::GeneratorGN<Real> gn;
  nn::Mfpd<Real> dl, dn;

  Adam<Real> opt_gen, opt_dl, opt_dn;

  Rng rng{0};
  int epoch = 0;        // completed epochs
  long long step = 0;   // completed steps
};

// deterministic derivation of per-component init streams from the run seed
uint64_t sub_seed(uint64_t seed, uint64_t salt);

std::unique_ptr<TrainState> build_state(const TrainConfig& cfg);

// One optimization step: forward both cycles, update generators, then update
// both discriminators on detached fakes, re-applying the spectral constraint
// after each phase. Throws TrainingAbort on a non-finite loss.
losses::LossBundle train_step(TrainState& st, const Tensor<Real>& batch_n,
                              const Tensor<Real>& batch_l,
                              const std::string& last_checkpoint = "");

void save_checkpoint(TrainState& st, const std::string& path);
// `st` must have been built from the same config (the tensor layout must match)
void load_checkpoint(TrainState& st, const std::string& path);

// Full run: per-step CSV loss log, per-epoch checkpoints, final checkpoint.
// Returns the final checkpoint path. A non-empty resume_checkpoint restores
// state and continues from the next epoch, appending to the loss log; the
// continuation is identical to an uninterrupted run because the rng stream
// travels with the checkpoint.
std::string fit(const TrainConfig& cfg, const data::UnpairedDataset& ds,
                const std::string& out_dir, const std::string& resume_checkpoint = "");

// deterministic single-image inference helpers used by the CLI
img::Image enhance_image(TrainState& st, const img::Image& low);
img::Image degrade_image(TrainState& st, const img::Image& normal, const img::Image& reference,
                         Rng& rng, bool deterministic);

}  // namespace cigan::train
