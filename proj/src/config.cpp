#include "vmav/config.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "vmav/common.hpp"

namespace vmav {

namespace {

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

double parse_double(const std::string& key, const std::string& s) {
  try {
    std::size_t pos = 0;
    double v = std::stod(s, &pos);
    VMAV_CHECK(pos == s.size(), "config: bad number for " + key);
    return v;
  } catch (const std::invalid_argument&) {
    fail("config: bad number for " + key + ": '" + s + "'");
  } catch (const std::out_of_range&) {
    fail("config: number out of range for " + key + ": '" + s + "'");
  }
}

long parse_long(const std::string& key, const std::string& s) {
  try {
    std::size_t pos = 0;
    long v = std::stol(s, &pos);
    VMAV_CHECK(pos == s.size(), "config: bad integer for " + key);
    return v;
  } catch (const std::invalid_argument&) {
    fail("config: bad integer for " + key + ": '" + s + "'");
  } catch (const std::out_of_range&) {
    fail("config: integer out of range for " + key + ": '" + s + "'");
  }
}

bool parse_bool(const std::string& key, const std::string& s) {
  if (s == "1" || s == "true") return true;
  if (s == "0" || s == "false") return false;
  fail("config: bad boolean for " + key + ": '" + s + "' (use 0/1)");
}

ConfigEntry entry_double(const std::string& key,
                         double ExperimentConfig::*field) {
  return {key,
          [field](const ExperimentConfig& c) {
            return format_double(c.*field);
          },
          [key, field](ExperimentConfig& c, const std::string& s) {
            c.*field = parse_double(key, s);
          }};
}

ConfigEntry entry_long(const std::string& key,
                       long ExperimentConfig::*field) {
  return {key,
          [field](const ExperimentConfig& c) {
            return std::to_string(c.*field);
          },
          [key, field](ExperimentConfig& c, const std::string& s) {
            c.*field = parse_long(key, s);
          }};
}

ConfigEntry entry_bool(const std::string& key,
                       bool ExperimentConfig::*field) {
  return {key,
          [field](const ExperimentConfig& c) {
            return c.*field ? "1" : "0";
          },
          [key, field](ExperimentConfig& c, const std::string& s) {
            c.*field = parse_bool(key, s);
          }};
}

ConfigEntry entry_string(const std::string& key,
                         std::string ExperimentConfig::*field) {
  return {key,
          [field](const ExperimentConfig& c) { return c.*field; },
          [field](ExperimentConfig& c, const std::string& s) {
            c.*field = s;
          }};
}

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

}  // namespace

const std::vector<ConfigEntry>& config_entries() {
  static const std::vector<ConfigEntry> entries = {
      entry_long("seed", &ExperimentConfig::seed),
      entry_double("env.gravity", &ExperimentConfig::env_gravity),
      entry_double("env.masscart", &ExperimentConfig::env_masscart),
      entry_double("env.masspole", &ExperimentConfig::env_masspole),
      entry_double("env.half_length", &ExperimentConfig::env_half_length),
      entry_double("env.force_mag", &ExperimentConfig::env_force_mag),
      entry_double("env.dt", &ExperimentConfig::env_dt),
      entry_double("env.x_threshold", &ExperimentConfig::env_x_threshold),
      entry_double("env.theta_threshold",
                   &ExperimentConfig::env_theta_threshold),
      entry_long("env.max_steps", &ExperimentConfig::env_max_steps),
      entry_double("env.init_band", &ExperimentConfig::env_init_band),
      entry_long("collect.episodes", &ExperimentConfig::collect_episodes),
      entry_long("vae.latent", &ExperimentConfig::vae_latent),
      entry_double("vae.lr", &ExperimentConfig::vae_lr),
      entry_long("vae.batch", &ExperimentConfig::vae_batch),
      entry_long("vae.epochs", &ExperimentConfig::vae_epochs),
      entry_string("vae.encode", &ExperimentConfig::vae_encode),
      entry_long("seq.length", &ExperimentConfig::seq_length),
      entry_long("seq.train_episodes",
                 &ExperimentConfig::seq_train_episodes),
      entry_long("mdn.hidden", &ExperimentConfig::mdn_hidden),
      entry_long("mdn.layers", &ExperimentConfig::mdn_layers),
      entry_long("mdn.components", &ExperimentConfig::mdn_components),
      entry_double("mdn.alpha", &ExperimentConfig::mdn_alpha),
      entry_double("mdn.beta1", &ExperimentConfig::mdn_beta1),
      entry_double("mdn.beta2", &ExperimentConfig::mdn_beta2),
      entry_double("mdn.lr", &ExperimentConfig::mdn_lr),
      entry_long("mdn.batch", &ExperimentConfig::mdn_batch),
      entry_long("mdn.updates", &ExperimentConfig::mdn_updates),
      entry_long("mdn.eval_every", &ExperimentConfig::mdn_eval_every),
      entry_double("tau", &ExperimentConfig::tau),
      entry_long("avf.window", &ExperimentConfig::avf_window),
      entry_double("avf.lambda", &ExperimentConfig::avf_lambda),
      entry_bool("avf.raw_over_exp", &ExperimentConfig::avf_raw_over_exp),
      entry_bool("avf.discounted_bootstrap",
                 &ExperimentConfig::avf_discounted_bootstrap),
      entry_double("avf.lr", &ExperimentConfig::avf_lr),
      entry_long("avf.batch", &ExperimentConfig::avf_batch),
      entry_long("avf.updates", &ExperimentConfig::avf_updates),
      entry_long("policy.hidden", &ExperimentConfig::policy_hidden),
      entry_double("ppo.eps", &ExperimentConfig::ppo_eps),
      entry_long("ppo.epochs", &ExperimentConfig::ppo_epochs),
      entry_long("ppo.minibatch", &ExperimentConfig::ppo_minibatch),
      entry_long("ppo.horizon", &ExperimentConfig::ppo_horizon),
      entry_double("ppo.pi_lr", &ExperimentConfig::ppo_pi_lr),
      entry_double("ppo.v_lr", &ExperimentConfig::ppo_v_lr),
      entry_double("ppo.ent_coef", &ExperimentConfig::ppo_ent_coef),
      entry_string("agent", &ExperimentConfig::agent),
      entry_string("env_mode", &ExperimentConfig::env_mode),
      entry_long("train.iterations", &ExperimentConfig::train_iterations),
      entry_long("train.eval_every", &ExperimentConfig::train_eval_every),
      entry_long("train.eval_episodes",
                 &ExperimentConfig::train_eval_episodes),
      entry_double("smooth.reward_rho",
                   &ExperimentConfig::smooth_reward_rho),
      entry_double("smooth.loss_rho", &ExperimentConfig::smooth_loss_rho),
  };
  return entries;
}

namespace {

const ConfigEntry* find_entry(const std::string& key) {
  for (const auto& e : config_entries())
    if (e.key == key) return &e;
  return nullptr;
}

void set_key(ExperimentConfig& cfg, const std::string& key,
             const std::string& value) {
  const ConfigEntry* e = find_entry(key);
  VMAV_CHECK(e != nullptr, "config: unknown key '" + key + "'");
  e->set(cfg, value);
}

}  // namespace

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  VMAV_CHECK(in.good(), "config: cannot open " + path);
  ExperimentConfig cfg;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    std::size_t eq = line.find('=');
    VMAV_CHECK(eq != std::string::npos,
               "config: missing '=' at " + path + ":" +
                   std::to_string(lineno));
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    set_key(cfg, key, value);
  }
  return cfg;
}

void apply_overrides(ExperimentConfig& cfg,
                     const std::vector<std::string>& overrides) {
  for (const auto& kv : overrides) {
    std::size_t eq = kv.find('=');
    VMAV_CHECK(eq != std::string::npos,
               "config override must look like key=value: '" + kv + "'");
    set_key(cfg, trim(kv.substr(0, eq)), trim(kv.substr(eq + 1)));
  }
}

void validate_config(const ExperimentConfig& cfg) {
  VMAV_CHECK(cfg.env_gravity > 0 && cfg.env_masscart > 0 &&
                 cfg.env_masspole > 0 && cfg.env_half_length > 0 &&
                 cfg.env_force_mag > 0,
             "config: physical env constants must be positive");
  VMAV_CHECK(cfg.env_dt > 0, "config: env.dt must be positive");
  VMAV_CHECK(cfg.env_x_threshold > 0,
             "config: env.x_threshold must be positive");
  VMAV_CHECK(cfg.env_theta_threshold > 0,
             "config: env.theta_threshold must be positive");
  VMAV_CHECK(cfg.env_max_steps >= 1, "config: env.max_steps must be >= 1");
  VMAV_CHECK(cfg.collect_episodes >= 1,
             "config: collect.episodes must be >= 1");
  VMAV_CHECK(cfg.vae_latent >= 1 && cfg.vae_batch >= 1 &&
                 cfg.vae_epochs >= 0 && cfg.vae_lr > 0,
             "config: bad vae settings");
  VMAV_CHECK(cfg.vae_encode == "sample" || cfg.vae_encode == "mean",
             "config: vae.encode must be sample or mean");
  VMAV_CHECK(cfg.seq_length == 16 || cfg.seq_length == 32,
             "config: seq.length must be 16 or 32");
  VMAV_CHECK(cfg.seq_train_episodes >= 1 &&
                 cfg.seq_train_episodes < cfg.collect_episodes,
             "config: seq.train_episodes must leave a held-out remainder");
  VMAV_CHECK(cfg.mdn_hidden >= 1 && cfg.mdn_layers >= 1 &&
                 cfg.mdn_components >= 1 && cfg.mdn_lr > 0 &&
                 cfg.mdn_batch >= 1 && cfg.mdn_updates >= 0 &&
                 cfg.mdn_eval_every >= 1,
             "config: bad mdn settings");
  VMAV_CHECK(cfg.tau > 0, "config: tau must be positive");
  VMAV_CHECK(cfg.avf_window >= 1 && cfg.avf_lr > 0 && cfg.avf_batch >= 1 &&
                 cfg.avf_updates >= 0,
             "config: bad avf settings");
  VMAV_CHECK(cfg.avf_lambda >= 0 && cfg.avf_lambda <= 1,
             "config: avf.lambda must lie in [0, 1]");
  VMAV_CHECK(cfg.policy_hidden >= 1, "config: policy.hidden must be >= 1");
  VMAV_CHECK(cfg.ppo_eps > 0 && cfg.ppo_epochs >= 1 &&
                 cfg.ppo_minibatch >= 1 && cfg.ppo_horizon >= 1 &&
                 cfg.ppo_pi_lr > 0 && cfg.ppo_v_lr > 0,
             "config: bad ppo settings");
  VMAV_CHECK(cfg.agent == "cp" || cfg.agent == "mrp" ||
                 cfg.agent == "vmavc",
             "config: agent must be cp, mrp, or vmavc");
  VMAV_CHECK(cfg.env_mode == "real" || cfg.env_mode == "dream",
             "config: env_mode must be real or dream");
  VMAV_CHECK(cfg.train_iterations >= 0 && cfg.train_eval_every >= 1 &&
                 cfg.train_eval_episodes >= 1,
             "config: bad train settings");
  VMAV_CHECK(cfg.smooth_reward_rho >= 0 && cfg.smooth_reward_rho < 1 &&
                 cfg.smooth_loss_rho >= 0 && cfg.smooth_loss_rho < 1,
             "config: smoothing rates must lie in [0, 1)");
}

void save_config(const ExperimentConfig& cfg, const std::string& path) {
  std::ostringstream out;
  for (const auto& e : config_entries())
    out << e.key << " = " << e.get(cfg) << "\n";
  std::ofstream f(path);
  VMAV_CHECK(f.good(), "config: cannot write " + path);
  f << out.str();
  VMAV_CHECK(f.good(), "config: write failed for " + path);
}

}  // namespace vmav
