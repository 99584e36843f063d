// SPDX-License-Identifier: Apache-2.0
#include "cigan/trainer.hpp"

#include <omp.h>

#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "cigan/checkpoint.hpp"

namespace cigan::train {

namespace fs = std::filesystem;
using ad::Var;

uint64_t sub_seed(uint64_t seed, uint64_t salt) {
  // splitmix64 over seed+salt
  uint64_t z = seed + salt * 0x9E3779B97F4A7C15ULL + 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::unique_ptr<TrainState> build_state(const TrainConfig& cfg) {
  auto st = std::make_unique<TrainState>();
  st->cfg = cfg;
  if (cfg.threads > 0) omp_set_num_threads(cfg.threads);

  if (cfg.backbone == "random")
    st->encoder = std::make_unique<nn::VggEncoder<Real>>(st->backbone_store, cfg.backbone_seed);
  else
    st->encoder = std::make_unique<nn::VggEncoder<Real>>(st->backbone_store, cfg.backbone);

  Rng rng_gen(sub_seed(cfg.seed, 1));
  Rng rng_dl(sub_seed(cfg.seed, 2));
  Rng rng_dn(sub_seed(cfg.seed, 3));
  st->gl = nn::GeneratorGL<Real>(st->gen_store, &st->sn_gen, st->encoder.get(), cfg.toggles,
                                 rng_gen);
  st->gn = nn::GeneratorGN<Real>(st->gen_store, &st->sn_gen, st->encoder.get(), cfg.toggles,
                                 cfg.lip_lambda, rng_gen);
  st->dl = nn::Mfpd<Real>(st->dl_store, st->sn_dl, "dl", cfg.toggles.mfpd, rng_dl);
  st->dn = nn::Mfpd<Real>(st->dn_store, st->sn_dn, "dn", cfg.toggles.mfpd, rng_dn);

  // start inside the spectral constraint
  st->sn_gen.apply();
  st->sn_dl.apply();
  st->sn_dn.apply();

  st->opt_gen = Adam<Real>(st->gen_store.trainable(), cfg.adam_beta1, cfg.adam_beta2);
  st->opt_dl = Adam<Real>(st->dl_store.trainable(), cfg.adam_beta1, cfg.adam_beta2);
  st->opt_dn = Adam<Real>(st->dn_store.trainable(), cfg.adam_beta1, cfg.adam_beta2);

  st->rng = Rng(sub_seed(cfg.seed, 4));
  return st;
}

namespace {

template <typename T>
nn::ScoreSet<T> detach_scores(const nn::ScoreSet<T>& s) {
  nn::ScoreSet<T> out;
  for (const auto& l : s.logits) out.logits.push_back(l.detach());
  out.aggregate = s.aggregate.detach();
  return out;
}

double current_lr(const TrainState& st) {
  int epoch = std::min(st.epoch + 1, st.cfg.epochs);  // epoch being trained, 1-based
  return lr_schedule(epoch, st.cfg);
}

}  // namespace

losses::LossBundle train_step(TrainState& st, const Tensor<Real>& batch_n,
                              const Tensor<Real>& batch_l, const std::string& last_checkpoint) {
  const TrainConfig& cfg = st.cfg;
  check(batch_n.h() == batch_l.h() && batch_n.w() == batch_l.w(),
        "train_step: batches must share the crop size");
  double lr = current_lr(st);

  auto zero_all = [&] {
    st.gen_store.zero_grads();
    st.dl_store.zero_grads();
    st.dn_store.zero_grads();
  };
  zero_all();

  auto in_n = Var<Real>::constant(batch_n);
  auto in_l = Var<Real>::constant(batch_l);

  // forward cycle: normal -> synthetic low -> recovered normal
  auto pyr_n = st.encoder->extract_pyramid(in_n);
  auto pyr_l = st.encoder->extract_pyramid(in_l);
  auto tilde_l = st.gl.degrade_from(pyr_n, pyr_l, st.rng, /*deterministic=*/false);
  auto pyr_tl = st.encoder->extract_pyramid(tilde_l);
  auto hat_n = st.gn.enhance_from(pyr_tl, tilde_l);

  // backward cycle: low -> pseudo normal -> recycled low (same real reference)
  auto tilde_n = st.gn.enhance_from(pyr_l, in_l);
  auto pyr_tn = st.encoder->extract_pyramid(tilde_n);
  auto hat_l = st.gl.degrade_from(pyr_tn, pyr_l, st.rng, /*deterministic=*/false);

  // adversarial pairs: first-hop fakes only
  auto s_real_l = st.dl.score(in_l);
  auto s_fake_l = st.dl.score(tilde_l);
  auto s_real_n = st.dn.score(in_n);
  auto s_fake_n = st.dn.score(tilde_n);

  losses::LossBundle bundle;

  // ---- generator phase (real scores detached) ----
  auto lg_adv_L = losses::rahinge_generator_loss(s_fake_l, detach_scores(s_real_l));
  auto lg_adv_N = losses::rahinge_generator_loss(s_fake_n, detach_scores(s_real_n));
  auto lg = ad::add(lg_adv_L, lg_adv_N);

  Var<Real> l_exp;
  if (cfg.toggles.exp_loss) {
    l_exp = losses::exposure_loss(tilde_l, cfg.exposure_e, cfg.exposure_sigma,
                                  cfg.exposure_window, cfg.exposure_per_channel);
    lg = ad::add(lg, l_exp * cfg.lambda_exp);
  }
  auto l_con = ad::add(losses::l1_mean(in_n, hat_n), losses::l1_mean(in_l, hat_l));
  // relu4_1 features; the pyramids of the real images are reused
  auto f_hat_n = st.encoder->extract_layer(hat_n, "relu4_1");
  auto f_hat_l = st.encoder->extract_layer(hat_l, "relu4_1");
  auto l_per = ad::add(losses::rms_diff(pyr_n[3], f_hat_n), losses::rms_diff(pyr_l[3], f_hat_l));
  lg = ad::add(lg, ad::add(l_con * cfg.lambda_con, l_per * cfg.lambda_per));

  ad::backward(lg);
  st.opt_gen.step(lr);
  zero_all();  // discard discriminator grads accumulated through the fakes
  st.sn_gen.apply();

  // ---- discriminator phase (fakes detached, fresh forward) ----
  auto s_fake_l_d = st.dl.score(tilde_l.detach());
  auto s_fake_n_d = st.dn.score(tilde_n.detach());
  auto ld_L = losses::rahinge_discriminator_loss(s_fake_l_d, s_real_l);
  auto ld_N = losses::rahinge_discriminator_loss(s_fake_n_d, s_real_n);
  auto ld = ad::add(ld_L, ld_N);
  ad::backward(ld);
  st.opt_dl.step(lr);
  st.opt_dn.step(lr);
  zero_all();
  st.sn_dl.apply();
  st.sn_dn.apply();

  bundle.lg_adv_L = lg_adv_L.item();
  bundle.lg_adv_N = lg_adv_N.item();
  bundle.l_exp = cfg.toggles.exp_loss ? l_exp.item() : 0.0;
  bundle.l_con = l_con.item();
  bundle.l_per = l_per.item();
  bundle.lg_total = lg.item();
  bundle.ld_L = ld_L.item();
  bundle.ld_N = ld_N.item();
  bundle.ld_total = ld.item();
  ++st.step;

  for (double v : {bundle.lg_adv_L, bundle.lg_adv_N, bundle.l_exp, bundle.l_con, bundle.l_per,
                   bundle.lg_total, bundle.ld_L, bundle.ld_N, bundle.ld_total})
    if (!std::isfinite(v))
      throw TrainingAbort("non-finite loss at step " + std::to_string(st.step) +
                              (last_checkpoint.empty() ? std::string(": no checkpoint yet")
                                                       : ": last good checkpoint " +
                                                             last_checkpoint),
                          last_checkpoint);
  return bundle;
}

void save_checkpoint(TrainState& st, const std::string& path) {
  std::vector<std::pair<std::string, const Tensor<Real>*>> tensors;

  auto collect = [&](const nn::ParameterStore<Real>& store, const std::string& prefix) {
    for (const auto& [name, v] : store.all()) tensors.push_back({prefix + name, &v.value()});
  };
  collect(st.gen_store, "gen.");
  collect(st.dl_store, "dl.");
  collect(st.dn_store, "dn.");
  st.opt_gen.export_state("adam_gen", tensors);
  st.opt_dl.export_state("adam_dl", tensors);
  st.opt_dn.export_state("adam_dn", tensors);

  std::map<std::string, std::string> meta;
  meta["kind"] = "checkpoint";
  meta["epoch"] = std::to_string(st.epoch);
  meta["step"] = std::to_string(st.step);
  meta["config_hash"] = config_hash(st.cfg);
  meta["rng"] = st.rng.save_state();
  meta["backbone"] = st.cfg.backbone == "random"
                         ? "random:" + std::to_string(st.cfg.backbone_seed)
                         : st.cfg.backbone;
  io::save_archive<Real>(path, tensors, meta);
}

void load_checkpoint(TrainState& st, const std::string& path) {
  std::map<std::string, std::string> meta;
  auto tensors = io::load_archive<Real>(path, &meta);
  check(meta["kind"] == "checkpoint", path + ": not a checkpoint archive");

  auto restore = [&](nn::ParameterStore<Real>& store, const std::string& prefix) {
    for (auto& [name, v] : store.all()) {
      auto it = tensors.find(prefix + name);
      check(it != tensors.end(), path + ": missing tensor " + prefix + name);
      check(it->second.shape() == v.value().shape(),
            path + ": shape mismatch for " + prefix + name);
      v.value() = it->second;
    }
  };
  restore(st.gen_store, "gen.");
  restore(st.dl_store, "dl.");
  restore(st.dn_store, "dn.");
  st.opt_gen.import_state("adam_gen", tensors);
  st.opt_dl.import_state("adam_dl", tensors);
  st.opt_dn.import_state("adam_dn", tensors);
  st.epoch = std::stoi(meta.at("epoch"));
  st.step = std::stoll(meta.at("step"));
  st.rng.load_state(meta.at("rng"));
}

namespace {

void write_csv_header(std::ofstream& f) {
  f << "step,epoch,lg_adv_L,lg_adv_N,l_exp,l_con,l_per,lg_total,ld_L,ld_N,ld_total,lr\n";
}

void write_csv_row(std::ofstream& f, long long step, int epoch, const losses::LossBundle& b,
                   double lr) {
  char buf[512];
  std::snprintf(buf, sizeof(buf),
                "%lld,%d,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g\n", step, epoch,
                b.lg_adv_L, b.lg_adv_N, b.l_exp, b.l_con, b.l_per, b.lg_total, b.ld_L, b.ld_N,
                b.ld_total, lr);
  f << buf;
}

}  // namespace

std::string fit(const TrainConfig& cfg, const data::UnpairedDataset& ds,
                const std::string& out_dir, const std::string& resume_checkpoint) {
  fs::create_directories(out_dir);
  {
    std::ofstream snap(fs::path(out_dir) / "config.resolved.json");
    snap << config_to_json(cfg) << "\n";
  }

  auto st = build_state(cfg);
  bool resuming = !resume_checkpoint.empty();
  if (resuming) load_checkpoint(*st, resume_checkpoint);
  data::EpochSampler sampler(ds, cfg.batch);

  std::ofstream csv(fs::path(out_dir) / "losses.csv",
                    resuming ? std::ios::app : std::ios::trunc);
  if (!csv) throw std::runtime_error(out_dir + ": cannot write loss log");
  if (!resuming) write_csv_header(csv);

  std::string last_ckpt = resuming ? resume_checkpoint : "";
  long long total_steps = 0;  // steps taken by this invocation
  bool stop = false;
  for (int epoch = st->epoch + 1; epoch <= cfg.epochs && !stop; ++epoch) {
    double lr = lr_schedule(epoch, cfg);
    sampler.begin_epoch(st->rng);
    int steps = sampler.steps_per_epoch();
    int done = 0;
    for (int s = 0; s < steps; ++s) {
      auto [bn, bl] = sampler.next_batch(st->rng, cfg.hflip);
      auto bundle = train_step(*st, bn, bl, last_ckpt);
      ++total_steps;
      ++done;
      write_csv_row(csv, st->step, epoch, bundle, lr);
      csv.flush();
      if (cfg.max_steps > 0 && total_steps >= cfg.max_steps) {
        stop = true;
        break;
      }
    }
    bool epoch_complete = done == steps;
    if (epoch_complete) st->epoch = epoch;
    // mid-epoch stops still get a final checkpoint below, but only complete
    // epochs are recorded as resumable epoch checkpoints
    if (epoch_complete && (epoch % cfg.checkpoint_every == 0 || epoch == cfg.epochs || stop)) {
      char name[64];
      std::snprintf(name, sizeof(name), "ckpt_epoch_%04d.ar", epoch);
      last_ckpt = (fs::path(out_dir) / name).string();
      save_checkpoint(*st, last_ckpt);
    }
  }

  std::string final_path = (fs::path(out_dir) / "ckpt_final.ar").string();
  save_checkpoint(*st, final_path);
  return final_path;
}

img::Image enhance_image(TrainState& st, const img::Image& low) {
  auto out = st.gn.enhance(Var<Real>::constant(low));
  return out.value();
}

img::Image degrade_image(TrainState& st, const img::Image& normal, const img::Image& reference,
                         Rng& rng, bool deterministic) {
  auto out = st.gl.degrade(Var<Real>::constant(normal), Var<Real>::constant(reference), rng,
                           deterministic);
  return out.value();
}

}  // namespace cigan::train
