#pragma once

#include <memory>
#include <string>
#include <vector>

#include "vmav/avf.hpp"
#include "vmav/cartpole.hpp"
#include "vmav/config.hpp"
#include "vmav/controller.hpp"
#include "vmav/metrics.hpp"
#include "vmav/render.hpp"
#include "vmav/storage.hpp"
#include "vmav/vae.hpp"
#include "vmav/worldmodel.hpp"

namespace vmav {

CartPoleConfig env_config(const ExperimentConfig& cfg);

// Step 0: roll a uniform-random policy and store preprocessed frames.
EpisodeStore collect_random_episodes(const ExperimentConfig& cfg,
                                     long episodes, std::uint64_t seed);

std::vector<long> episode_lengths(const EpisodeStore& store);

struct FrameRef {
  int episode = 0;
  int frame = 0;
};

struct VaeSplit {
  std::vector<FrameRef> train, test;
};

// Shuffled 75/25 frame split.
VaeSplit build_vae_split(const EpisodeStore& store, std::uint64_t seed);

struct VaeTrainResult {
  std::shared_ptr<Vae<float>> vae;
  MetricTable metrics;  // update, loss, kl
  double heldout_mse_untrained = 0.0;
  double heldout_mse_trained = 0.0;
  double min_kl = 0.0;
  bool kl_always_finite = true;
};

VaeTrainResult train_vae(const EpisodeStore& store,
                         const ExperimentConfig& cfg);

// Replaces every frame by its latent code; actions, rewards and done flags
// are preserved. The result reuses the episode container with 1 x latent
// "frames" in float mode. With an rng the code is sampled from the
// posterior, z = mu + exp(logvar / 2) * eps (the mode world-model training
// data is built in); without one it is the posterior mean, which makes
// re-encoding deterministic.
EpisodeStore encode_episodes(const EpisodeStore& store,
                             const Vae<float>& vae, Rng* rng = nullptr);

struct MiniSequence {
  Mat<float> z;       // latent x L
  Mat<float> z_next;  // latent x L
  std::vector<int> actions;
  std::vector<float> rewards;
  std::vector<std::uint8_t> dones;
};

struct SequenceDataset {
  int length = 0;
  std::vector<MiniSequence> train, test;
};

// Merges episodes in order into one stream per split and slices it into
// non-overlapping L-step pieces, dropping a short tail.
SequenceDataset build_sequence_dataset(const EpisodeStore& latents, int L,
                                       long train_episodes);

struct MdnEval {
  double ls = 0.0;        // per-step held-out mixture NLL
  double lp = 0.0;        // per-step held-out done loss
  double done_acc = 0.0;  // q > 0.5 against the stored flag
};

MdnEval eval_mdn(const MdnRnn<float>& mdn,
                 const std::vector<MiniSequence>& slices, long batch);

struct MdnTrainResult {
  std::shared_ptr<MdnRnn<float>> mdn;
  MetricTable metrics;  // update, loss, heldout_ls, done_accuracy
  MdnEval final_eval;
  double baseline_gaussian_nll = 0.0;  // moment-matched unconditional fit
  double majority_accuracy = 0.0;
};

MdnTrainResult train_mdnrnn(const SequenceDataset& data,
                            const ExperimentConfig& cfg);

struct AvfTrainResult {
  std::shared_ptr<Avf<float>> avf;
  MetricTable metrics;  // update, loss
};

// Algorithm step: regress the attention critic onto n-step returns over
// teacher-forced hidden states of the pretrained world model.
AvfTrainResult pretrain_avf(const SequenceDataset& data,
                            const MdnRnn<float>& mdn,
                            const ExperimentConfig& cfg);

enum class AgentVariant { cp, mrp, vmavc };

AgentVariant parse_variant(const std::string& name);

struct AgentBundle {
  AgentVariant variant = AgentVariant::vmavc;
  std::shared_ptr<Vae<float>> vae;
  std::shared_ptr<MdnRnn<float>> mdn;  // null for cp
  std::shared_ptr<Policy<float>> policy;
  std::shared_ptr<Critic<float>> critic;
};

// Builds the variant's policy/critic pair; vmavc copies the pretrained
// attention critic's parameters when one is supplied.
AgentBundle make_agent(const ExperimentConfig& cfg,
                       std::shared_ptr<Vae<float>> vae,
                       std::shared_ptr<MdnRnn<float>> mdn,
                       const Avf<float>* pretrained_avf);

// One real-environment episode under the bundle's policy; returns the
// undiscounted return (equal to the episode length here).
double run_episode(const ExperimentConfig& cfg, const AgentBundle& agent,
                   Rng& env_rng, Rng& action_rng, bool greedy);

struct EvalResult {
  double mean = 0.0;
  double stddev = 0.0;
  std::vector<double> returns;
};

// Greedy evaluation over fresh seeded episodes.
EvalResult evaluate_agent(const ExperimentConfig& cfg,
                          const AgentBundle& agent, long episodes,
                          std::uint64_t seed);

struct TrainAgentResult {
  AgentBundle agent;
  MetricTable metrics;       // iteration, env_steps, reward, value_loss
  MetricTable eval_metrics;  // iteration, eval_mean, eval_std
  long real_episodes_train = 0;
  long real_episodes_eval = 0;
  long real_steps_train = 0;
  bool constructed_mdn = false;
};

// Algorithm step: PPO against the configured environment (real or dream),
// with periodic greedy evaluation in the real environment.
TrainAgentResult train_agent(const ExperimentConfig& cfg,
                             std::shared_ptr<Vae<float>> vae,
                             std::shared_ptr<MdnRnn<float>> mdn,
                             const Avf<float>* pretrained_avf,
                             const EpisodeStore* latents_for_dream);

// Mean return of the uniform-random policy (the comparison baseline).
double random_policy_baseline(const ExperimentConfig& cfg, long episodes,
                              std::uint64_t seed);

// One latent column per episode: the encoding of its first observation.
// These seed dream-environment resets.
Mat<float> initial_latents(const EpisodeStore& latents);

}  // namespace vmav
