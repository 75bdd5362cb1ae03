#pragma once

#include <memory>
#include <string>

#include "vmav/pipeline.hpp"

namespace vmav {

// File layout inside a run directory. Stage outputs live at the top level;
// each agent training run gets a named subdirectory.
struct RunPaths {
  std::string root;

  std::string episodes() const { return root + "/episodes.vmep"; }
  std::string lengths_csv() const { return root + "/lengths.csv"; }
  std::string histogram_svg() const { return root + "/histogram.svg"; }
  std::string histogram_csv() const { return root + "/histogram.csv"; }
  std::string vae_ckpt() const { return root + "/vae.vmck"; }
  std::string vae_metrics() const { return root + "/vae_metrics.csv"; }
  std::string vae_summary() const { return root + "/vae_summary.json"; }
  std::string latents() const { return root + "/latents.vmep"; }
  std::string mdn_ckpt() const { return root + "/mdn.vmck"; }
  std::string mdn_metrics() const { return root + "/mdn_metrics.csv"; }
  std::string mdn_summary() const { return root + "/mdn_summary.json"; }
  std::string avf_ckpt() const { return root + "/avf.vmck"; }
  std::string avf_metrics() const { return root + "/avf_metrics.csv"; }
  std::string config_file() const { return root + "/config.txt"; }
  std::string provenance(const std::string& stage) const {
    return root + "/provenance-" + stage + ".txt";
  }
  std::string agent_dir(const std::string& run) const {
    return root + "/" + run;
  }
};

void ensure_dir(const std::string& path);
bool file_exists(const std::string& path);
std::string file_sha256(const std::string& path);

// Checkpoint loaders; models are shaped from the config, then filled.
std::shared_ptr<Vae<float>> load_vae(const ExperimentConfig& cfg,
                                     const std::string& ckpt);
std::shared_ptr<MdnRnn<float>> load_mdn(const ExperimentConfig& cfg,
                                        const std::string& ckpt);
std::shared_ptr<Avf<float>> load_avf(const ExperimentConfig& cfg,
                                     const std::string& ckpt);

// Stage entry points shared by the CLI and the acceptance harness. Each
// validates its prerequisites (missing files name the command that
// produces them), writes its artifacts under `dir`, and returns the heavy
// products for in-process reuse.
void stage_collect(const ExperimentConfig& cfg, const std::string& dir);
VaeTrainResult stage_train_vae(const ExperimentConfig& cfg,
                               const std::string& dir);
MdnTrainResult stage_train_mdn(const ExperimentConfig& cfg,
                               const std::string& dir);
AvfTrainResult stage_pretrain_avf(const ExperimentConfig& cfg,
                                  const std::string& dir);
TrainAgentResult stage_train_agent(const ExperimentConfig& cfg,
                                   const std::string& dir,
                                   const std::string& run_name);
EvalResult stage_evaluate(const ExperimentConfig& cfg,
                          const std::string& dir,
                          const std::string& run_name, long episodes);
void stage_plot(const ExperimentConfig& cfg, const std::string& dir,
                const std::string& run_name);
void stage_histogram(const ExperimentConfig& cfg, const std::string& dir);

std::string default_run_name(const ExperimentConfig& cfg);

// The tau x L grid: trains a world model and value function per sequence
// length, then a dream-environment agent per (tau, L) cell. Produces the
// eight sens-tau{t}-L{l} run directories.
void run_sensitivity(const ExperimentConfig& cfg, const std::string& dir);

}  // namespace vmav
