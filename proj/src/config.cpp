// SPDX-License-Identifier: Apache-2.0
#include "cigan/config.hpp"

#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace cigan::train {

using nlohmann::json;

double lr_schedule(int epoch, const TrainConfig& cfg) {
  check(epoch >= 1 && epoch <= cfg.epochs,
        "lr_schedule: epoch " + std::to_string(epoch) + " outside 1.." +
            std::to_string(cfg.epochs));
  if (epoch <= cfg.lr_fixed_epochs || cfg.epochs <= cfg.lr_fixed_epochs) return cfg.lr;
  return cfg.lr * static_cast<double>(cfg.epochs - epoch) /
         static_cast<double>(cfg.epochs - cfg.lr_fixed_epochs);
}

namespace {

const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys = {
      "epochs",         "batch",          "crop",           "adam_beta1",
      "adam_beta2",     "lr",             "lr_fixed_epochs", "lambda_exp",
      "lambda_con",     "lambda_per",     "exposure_e",     "exposure_sigma",
      "exposure_window", "exposure_per_channel", "lip_lambda", "seed",
      "lgt",            "frp",            "dam",            "mfpd",
      "lip",            "exp_loss",       "backbone",       "backbone_seed",
      "max_steps",      "threads",        "hflip",          "checkpoint_every",
      "normal_dir",     "low_dir",        "out_dir"};
  return keys;
}

}  // namespace

TrainConfig parse_config_text(const std::string& text, const std::string& origin) {
  json j = json::parse(text, nullptr, /*allow_exceptions=*/false);
  if (j.is_discarded() || !j.is_object())
    throw std::runtime_error(origin + ": not a JSON object");

  for (const auto& [key, value] : j.items())
    if (!known_keys().count(key))
      throw std::runtime_error(origin + ": unknown config key \"" + key + "\"");

  TrainConfig c;
  auto geti = [&](const char* k, int& dst) { if (j.contains(k)) dst = j[k].get<int>(); };
  auto getd = [&](const char* k, double& dst) { if (j.contains(k)) dst = j[k].get<double>(); };
  auto getb = [&](const char* k, bool& dst) { if (j.contains(k)) dst = j[k].get<bool>(); };
  auto gets = [&](const char* k, std::string& dst) { if (j.contains(k)) dst = j[k].get<std::string>(); };
  auto getu = [&](const char* k, uint64_t& dst) { if (j.contains(k)) dst = j[k].get<uint64_t>(); };

  geti("epochs", c.epochs);
  geti("batch", c.batch);
  geti("crop", c.crop);
  getd("adam_beta1", c.adam_beta1);
  getd("adam_beta2", c.adam_beta2);
  getd("lr", c.lr);
  geti("lr_fixed_epochs", c.lr_fixed_epochs);
  getd("lambda_exp", c.lambda_exp);
  getd("lambda_con", c.lambda_con);
  getd("lambda_per", c.lambda_per);
  getd("exposure_e", c.exposure_e);
  getd("exposure_sigma", c.exposure_sigma);
  geti("exposure_window", c.exposure_window);
  getb("exposure_per_channel", c.exposure_per_channel);
  getd("lip_lambda", c.lip_lambda);
  getu("seed", c.seed);
  getb("lgt", c.toggles.lgt);
  getb("frp", c.toggles.frp);
  getb("dam", c.toggles.dam);
  getb("mfpd", c.toggles.mfpd);
  getb("lip", c.toggles.lip);
  getb("exp_loss", c.toggles.exp_loss);
  gets("backbone", c.backbone);
  getu("backbone_seed", c.backbone_seed);
  geti("max_steps", c.max_steps);
  geti("threads", c.threads);
  getb("hflip", c.hflip);
  geti("checkpoint_every", c.checkpoint_every);
  gets("normal_dir", c.normal_dir);
  gets("low_dir", c.low_dir);
  gets("out_dir", c.out_dir);

  check(c.epochs >= 1, origin + ": epochs must be >= 1");
  check(c.batch >= 1, origin + ": batch must be >= 1");
  check(c.crop >= 32, origin + ": crop must be >= 32");
  check(c.lip_lambda >= 1.0, origin + ": lip_lambda must be >= 1");
  return c;
}

TrainConfig parse_config_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error(path + ": cannot open config");
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_config_text(ss.str(), path);
}

std::string config_to_json(const TrainConfig& c) {
  json j;
  j["epochs"] = c.epochs;
  j["batch"] = c.batch;
  j["crop"] = c.crop;
  j["adam_beta1"] = c.adam_beta1;
  j["adam_beta2"] = c.adam_beta2;
  j["lr"] = c.lr;
  j["lr_fixed_epochs"] = c.lr_fixed_epochs;
  j["lambda_exp"] = c.lambda_exp;
  j["lambda_con"] = c.lambda_con;
  j["lambda_per"] = c.lambda_per;
  j["exposure_e"] = c.exposure_e;
  j["exposure_sigma"] = c.exposure_sigma;
  j["exposure_window"] = c.exposure_window;
  j["exposure_per_channel"] = c.exposure_per_channel;
  j["lip_lambda"] = c.lip_lambda;
  j["seed"] = c.seed;
  j["lgt"] = c.toggles.lgt;
  j["frp"] = c.toggles.frp;
  j["dam"] = c.toggles.dam;
  j["mfpd"] = c.toggles.mfpd;
  j["lip"] = c.toggles.lip;
  j["exp_loss"] = c.toggles.exp_loss;
  j["backbone"] = c.backbone;
  j["backbone_seed"] = c.backbone_seed;
  j["max_steps"] = c.max_steps;
  j["threads"] = c.threads;
  j["hflip"] = c.hflip;
  j["checkpoint_every"] = c.checkpoint_every;
  j["normal_dir"] = c.normal_dir;
  j["low_dir"] = c.low_dir;
  j["out_dir"] = c.out_dir;
  return j.dump(2);
}

std::string config_hash(const TrainConfig& c) {
  size_t h = std::hash<std::string>{}(config_to_json(c));
  std::ostringstream os;
  os << std::hex << h;
  return os.str();
}

}  // namespace cigan::train
