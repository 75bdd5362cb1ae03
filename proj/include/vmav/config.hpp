#pragma once

#include <functional>
#include <string>
#include <vector>

namespace vmav {

// Every tunable of the experiment pipeline, loaded from a flat key=value
// file. Unknown keys are rejected; the fully resolved config is persisted
// next to results.
struct ExperimentConfig {
  long seed = 1;

  // environment
  double env_gravity = 9.8;
  double env_masscart = 1.0;
  double env_masspole = 0.1;
  double env_half_length = 0.5;
  double env_force_mag = 10.0;
  double env_dt = 0.02;
  double env_x_threshold = 2.4;
  double env_theta_threshold = 0.261799;  // 15 degrees
  long env_max_steps = 200;
  double env_init_band = 0.05;

  // data collection
  long collect_episodes = 2000;

  // vae
  long vae_latent = 32;
  double vae_lr = 1e-4;
  long vae_batch = 256;
  long vae_epochs = 4;
  // How stored episodes are turned into latent codes for world-model
  // training: "sample" draws z ~ q(z|x), "mean" uses the posterior mean.
  // Execution-time encoding (acting in the real environment) always uses
  // the mean.
  std::string vae_encode = "sample";

  // sequence dataset
  long seq_length = 32;
  long seq_train_episodes = 1500;

  // mdn-rnn
  long mdn_hidden = 256;
  long mdn_layers = 3;
  long mdn_components = 5;
  double mdn_alpha = 2.0;
  double mdn_beta1 = 1.0;
  double mdn_beta2 = 1.0;
  double mdn_lr = 4.77e-5;
  long mdn_batch = 256;
  long mdn_updates = 600;
  long mdn_eval_every = 50;

  // sampling temperature for the dream environment
  double tau = 1.0;

  // attention value function
  long avf_window = 4;
  double avf_lambda = 0.99;
  bool avf_raw_over_exp = false;
  bool avf_discounted_bootstrap = true;
  double avf_lr = 1e-3;
  long avf_batch = 64;
  long avf_updates = 300;

  // policy and ppo
  long policy_hidden = 64;
  double ppo_eps = 0.2;
  long ppo_epochs = 4;
  long ppo_minibatch = 256;
  long ppo_horizon = 2048;
  double ppo_pi_lr = 3e-4;
  double ppo_v_lr = 1e-3;
  double ppo_ent_coef = 0.0;

  // agent training
  std::string agent = "vmavc";    // cp | mrp | vmavc
  std::string env_mode = "real";  // real | dream
  long train_iterations = 4000;
  long train_eval_every = 1000;
  long train_eval_episodes = 20;

  // metric smoothing (reward curves / loss curves)
  double smooth_reward_rho = 0.9;
  double smooth_loss_rho = 0.95;
};

struct ConfigEntry {
  std::string key;
  std::function<std::string(const ExperimentConfig&)> get;
  std::function<void(ExperimentConfig&, const std::string&)> set;
};

const std::vector<ConfigEntry>& config_entries();

// Parses "key = value" lines ('#' starts a comment). Throws on unknown keys,
// unparsable values, or a missing file.
ExperimentConfig load_config(const std::string& path);

// Applies "key=value" strings on top of a config (CLI overrides).
void apply_overrides(ExperimentConfig& cfg,
                     const std::vector<std::string>& overrides);

// Range and enum validation; throws naming the offending key.
void validate_config(const ExperimentConfig& cfg);

// Writes every key in declaration order.
void save_config(const ExperimentConfig& cfg, const std::string& path);

}  // namespace vmav
