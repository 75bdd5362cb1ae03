#include "vmav/experiment.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace vmav {

namespace {

using nlohmann::json;

void require_file(const std::string& path, const std::string& produce_cmd) {
  if (!file_exists(path)) {
    throw std::runtime_error("missing prerequisite " + path +
                             "; produce it with `" + produce_cmd + "`");
  }
}

std::string collect_cmd(const std::string& dir) {
  return "vmav collect --dir " + dir;
}
std::string train_vae_cmd(const std::string& dir) {
  return "vmav train-vae --dir " + dir;
}
std::string train_mdn_cmd(const std::string& dir) {
  return "vmav train-mdnrnn --dir " + dir;
}
std::string pretrain_avf_cmd(const std::string& dir) {
  return "vmav pretrain-avf --dir " + dir;
}

// One provenance record per stage: the seed, every file consumed and every
// file produced, each with a content hash. Rewritten wholesale on re-runs
// so repeated invocations leave identical bytes behind.
struct Provenance {
  std::string stage;
  std::vector<std::string> lines;

  void note(const std::string& key, const std::string& value) {
    lines.push_back(key + "=" + value);
  }
  void file(const std::string& kind, const std::string& label,
            const std::string& path) {
    lines.push_back(kind + " " + label + " sha256=" + file_sha256(path));
  }
  void write(const std::string& path) const {
    std::ofstream out(path, std::ios::trunc);
    VMAV_CHECK(out.good(), "provenance: cannot open " + path);
    out << "stage=" << stage << "\n";
    for (const auto& l : lines) out << l << "\n";
  }
};

void write_json(const json& j, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  VMAV_CHECK(out.good(), "cannot open " + path + " for writing");
  out << j.dump(2) << "\n";
}

void write_lengths_csv(const EpisodeStore& store, const std::string& path) {
  MetricTable t;
  t.columns = {"episode", "length"};
  const auto lengths = episode_lengths(store);
  for (std::size_t i = 0; i < lengths.size(); ++i)
    t.add_row({double(i), double(lengths[i])});
  write_metrics_csv(t, path);
}

// Raw + smoothed line chart for one column of a metrics table; returns the
// smoothed series so callers can pool them into one CSV.
MetricSeries plot_column(const MetricTable& t, const std::string& column,
                         const std::string& run_id, double rho,
                         const std::string& out_svg) {
  MetricSeries raw = t.series(column, run_id);
  MetricSeries smooth = ema_smooth(raw, rho);
  write_svg_lines({raw, smooth}, column, out_svg);
  return smooth;
}

double column_rho(const ExperimentConfig& cfg, const std::string& column) {
  return column.find("loss") != std::string::npos ? cfg.smooth_loss_rho
                                                  : cfg.smooth_reward_rho;
}

SequenceDataset load_sequences(const ExperimentConfig& cfg,
                               const std::string& dir) {
  RunPaths p{dir};
  require_file(p.latents(), train_vae_cmd(dir));
  EpisodeStore latents = read_episodes(p.latents());
  return build_sequence_dataset(latents, int(cfg.seq_length),
                                cfg.seq_train_episodes);
}

}  // namespace

void ensure_dir(const std::string& path) {
  std::filesystem::create_directories(path);
}

bool file_exists(const std::string& path) {
  return std::filesystem::exists(path);
}

std::string file_sha256(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  VMAV_CHECK(in.good(), "file_sha256: cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  const std::string data = buf.str();
  return sha256_hex(data.data(), data.size());
}

std::shared_ptr<Vae<float>> load_vae(const ExperimentConfig& cfg,
                                     const std::string& ckpt) {
  VaeConfig vc;
  vc.latent = int(cfg.vae_latent);
  Rng rng(0);
  auto vae = std::make_shared<Vae<float>>(vc, rng);
  read_checkpoint(vae->params, ckpt);
  return vae;
}

std::shared_ptr<MdnRnn<float>> load_mdn(const ExperimentConfig& cfg,
                                        const std::string& ckpt) {
  MdnConfig mc;
  mc.latent = int(cfg.vae_latent);
  mc.actions = 2;
  mc.hidden = int(cfg.mdn_hidden);
  mc.layers = int(cfg.mdn_layers);
  mc.components = int(cfg.mdn_components);
  mc.alpha = cfg.mdn_alpha;
  mc.beta1 = cfg.mdn_beta1;
  mc.beta2 = cfg.mdn_beta2;
  Rng rng(0);
  auto mdn = std::make_shared<MdnRnn<float>>(mc, rng);
  read_checkpoint(mdn->params, ckpt);
  return mdn;
}

std::shared_ptr<Avf<float>> load_avf(const ExperimentConfig& cfg,
                                     const std::string& ckpt) {
  AvfConfig ac;
  ac.window = int(cfg.avf_window);
  ac.latent = int(cfg.vae_latent);
  ac.hidden = int(cfg.mdn_hidden);
  ac.raw_over_exp = cfg.avf_raw_over_exp;
  ac.lambda = cfg.avf_lambda;
  ac.discounted_bootstrap = cfg.avf_discounted_bootstrap;
  Rng rng(0);
  auto avf = std::make_shared<Avf<float>>(ac, rng);
  read_checkpoint(avf->params, ckpt);
  return avf;
}

void stage_collect(const ExperimentConfig& cfg, const std::string& dir) {
  validate_config(cfg);
  ensure_dir(dir);
  RunPaths p{dir};

  EpisodeStore store =
      collect_random_episodes(cfg, cfg.collect_episodes,
                              std::uint64_t(cfg.seed));
  write_episodes(store, p.episodes());
  write_lengths_csv(store, p.lengths_csv());
  save_config(cfg, p.config_file());

  Provenance prov{"collect"};
  prov.note("seed", std::to_string(cfg.seed));
  prov.note("episodes", std::to_string(cfg.collect_episodes));
  prov.file("produced", "episodes.vmep", p.episodes());
  prov.file("produced", "lengths.csv", p.lengths_csv());
  prov.write(p.provenance("collect"));
}

VaeTrainResult stage_train_vae(const ExperimentConfig& cfg,
                               const std::string& dir) {
  validate_config(cfg);
  RunPaths p{dir};
  require_file(p.episodes(), collect_cmd(dir));

  EpisodeStore store = read_episodes(p.episodes());
  VaeTrainResult res = train_vae(store, cfg);
  write_checkpoint(res.vae->params, p.vae_ckpt());
  write_metrics_csv(res.metrics, p.vae_metrics());

  json summary;
  summary["heldout_mse_untrained"] = res.heldout_mse_untrained;
  summary["heldout_mse_trained"] = res.heldout_mse_trained;
  summary["min_kl"] = res.min_kl;
  summary["kl_always_finite"] = res.kl_always_finite;
  write_json(summary, p.vae_summary());

  Rng encode_rng = Rng(std::uint64_t(cfg.seed)).fork("encode");
  Rng* encode_rng_ptr = cfg.vae_encode == "sample" ? &encode_rng : nullptr;
  EpisodeStore latents = encode_episodes(store, *res.vae, encode_rng_ptr);
  write_episodes(latents, p.latents());

  Provenance prov{"train-vae"};
  prov.note("seed", std::to_string(cfg.seed));
  prov.note("encode", cfg.vae_encode);
  prov.file("consumed", "episodes.vmep", p.episodes());
  prov.file("produced", "vae.vmck", p.vae_ckpt());
  prov.file("produced", "vae_metrics.csv", p.vae_metrics());
  prov.file("produced", "vae_summary.json", p.vae_summary());
  prov.file("produced", "latents.vmep", p.latents());
  prov.write(p.provenance("train-vae"));
  return res;
}

MdnTrainResult stage_train_mdn(const ExperimentConfig& cfg,
                               const std::string& dir) {
  validate_config(cfg);
  RunPaths p{dir};
  SequenceDataset data = load_sequences(cfg, dir);
  MdnTrainResult res = train_mdnrnn(data, cfg);
  write_checkpoint(res.mdn->params, p.mdn_ckpt());
  write_metrics_csv(res.metrics, p.mdn_metrics());

  json summary;
  summary["seq_length"] = data.length;
  summary["train_slices"] = data.train.size();
  summary["test_slices"] = data.test.size();
  summary["final_heldout_ls"] = res.final_eval.ls;
  summary["final_heldout_lp"] = res.final_eval.lp;
  summary["final_done_accuracy"] = res.final_eval.done_acc;
  summary["baseline_gaussian_nll"] = res.baseline_gaussian_nll;
  summary["majority_accuracy"] = res.majority_accuracy;
  write_json(summary, p.mdn_summary());

  Provenance prov{"train-mdnrnn"};
  prov.note("seed", std::to_string(cfg.seed));
  prov.note("seq_length", std::to_string(cfg.seq_length));
  prov.file("consumed", "latents.vmep", p.latents());
  prov.file("produced", "mdn.vmck", p.mdn_ckpt());
  prov.file("produced", "mdn_metrics.csv", p.mdn_metrics());
  prov.file("produced", "mdn_summary.json", p.mdn_summary());
  prov.write(p.provenance("train-mdnrnn"));
  return res;
}

AvfTrainResult stage_pretrain_avf(const ExperimentConfig& cfg,
                                  const std::string& dir) {
  validate_config(cfg);
  RunPaths p{dir};
  require_file(p.mdn_ckpt(), train_mdn_cmd(dir));
  SequenceDataset data = load_sequences(cfg, dir);
  auto mdn = load_mdn(cfg, p.mdn_ckpt());
  AvfTrainResult res = pretrain_avf(data, *mdn, cfg);
  write_checkpoint(res.avf->params, p.avf_ckpt());
  write_metrics_csv(res.metrics, p.avf_metrics());

  Provenance prov{"pretrain-avf"};
  prov.note("seed", std::to_string(cfg.seed));
  prov.file("consumed", "latents.vmep", p.latents());
  prov.file("consumed", "mdn.vmck", p.mdn_ckpt());
  prov.file("produced", "avf.vmck", p.avf_ckpt());
  prov.file("produced", "avf_metrics.csv", p.avf_metrics());
  prov.write(p.provenance("pretrain-avf"));
  return res;
}

std::string default_run_name(const ExperimentConfig& cfg) {
  return cfg.agent + "-" + cfg.env_mode + "-seed" + std::to_string(cfg.seed);
}

TrainAgentResult stage_train_agent(const ExperimentConfig& cfg,
                                   const std::string& dir,
                                   const std::string& run_name) {
  validate_config(cfg);
  RunPaths p{dir};
  const AgentVariant variant = parse_variant(cfg.agent);
  const bool dream = cfg.env_mode == "dream";
  const bool need_mdn = variant != AgentVariant::cp || dream;
  const bool need_avf = variant == AgentVariant::vmavc;

  require_file(p.vae_ckpt(), train_vae_cmd(dir));
  if (need_mdn) require_file(p.mdn_ckpt(), train_mdn_cmd(dir));
  if (need_avf) require_file(p.avf_ckpt(), pretrain_avf_cmd(dir));
  if (dream) require_file(p.latents(), train_vae_cmd(dir));

  auto vae = load_vae(cfg, p.vae_ckpt());
  std::shared_ptr<MdnRnn<float>> mdn;
  if (need_mdn) mdn = load_mdn(cfg, p.mdn_ckpt());
  std::shared_ptr<Avf<float>> avf;
  if (need_avf) avf = load_avf(cfg, p.avf_ckpt());
  EpisodeStore latents;
  if (dream) latents = read_episodes(p.latents());

  TrainAgentResult res =
      train_agent(cfg, vae, mdn, avf.get(), dream ? &latents : nullptr);
  if (variant == AgentVariant::cp) {
    VMAV_CHECK(!res.constructed_mdn,
               "cp agent must not construct a world model");
  }

  RunPaths rp{p.agent_dir(run_name)};
  ensure_dir(rp.root);
  write_metrics_csv(res.metrics, rp.root + "/train_metrics.csv");
  write_metrics_csv(res.eval_metrics, rp.root + "/eval_metrics.csv");
  write_checkpoint(res.agent.policy->params, rp.root + "/policy.vmck");
  write_checkpoint(res.agent.critic->params(), rp.root + "/critic.vmck");
  save_config(cfg, rp.config_file());

  Provenance prov{"train"};
  prov.note("seed", std::to_string(cfg.seed));
  prov.note("agent", cfg.agent);
  prov.note("env_mode", cfg.env_mode);
  prov.note("real_episodes_train", std::to_string(res.real_episodes_train));
  prov.note("real_episodes_eval", std::to_string(res.real_episodes_eval));
  prov.note("real_steps_train", std::to_string(res.real_steps_train));
  prov.file("consumed", "vae.vmck", p.vae_ckpt());
  if (need_mdn) prov.file("consumed", "mdn.vmck", p.mdn_ckpt());
  if (need_avf) prov.file("consumed", "avf.vmck", p.avf_ckpt());
  if (dream) prov.file("consumed", "latents.vmep", p.latents());
  prov.file("produced", run_name + "/train_metrics.csv",
            rp.root + "/train_metrics.csv");
  prov.file("produced", run_name + "/eval_metrics.csv",
            rp.root + "/eval_metrics.csv");
  prov.file("produced", run_name + "/policy.vmck", rp.root + "/policy.vmck");
  prov.file("produced", run_name + "/critic.vmck", rp.root + "/critic.vmck");
  prov.write(rp.provenance("train"));
  return res;
}

EvalResult stage_evaluate(const ExperimentConfig& cfg,
                          const std::string& dir,
                          const std::string& run_name, long episodes) {
  RunPaths p{dir};
  RunPaths rp{p.agent_dir(run_name)};
  const std::string train_cmd =
      "vmav train --agent " + cfg.agent + " --dir " + dir;
  require_file(rp.config_file(), train_cmd);
  require_file(rp.root + "/policy.vmck", train_cmd);
  require_file(rp.root + "/critic.vmck", train_cmd);

  // The run's own config snapshot governs model shapes and seeds.
  ExperimentConfig rcfg = load_config(rp.config_file());
  const AgentVariant variant = parse_variant(rcfg.agent);

  require_file(p.vae_ckpt(), train_vae_cmd(dir));
  auto vae = load_vae(rcfg, p.vae_ckpt());
  std::shared_ptr<MdnRnn<float>> mdn;
  if (variant != AgentVariant::cp) {
    require_file(p.mdn_ckpt(), train_mdn_cmd(dir));
    mdn = load_mdn(rcfg, p.mdn_ckpt());
  }
  AgentBundle bundle = make_agent(rcfg, vae, mdn, nullptr);
  read_checkpoint(bundle.policy->params, rp.root + "/policy.vmck");
  read_checkpoint(bundle.critic->params(), rp.root + "/critic.vmck");

  const std::uint64_t seed =
      Rng(std::uint64_t(rcfg.seed)).fork("standalone-eval").next_u64();
  EvalResult res = evaluate_agent(rcfg, bundle, episodes, seed);

  json out;
  out["run"] = run_name;
  out["episodes"] = episodes;
  out["mean"] = res.mean;
  out["stddev"] = res.stddev;
  out["returns"] = res.returns;
  write_json(out, rp.root + "/eval.json");
  return res;
}

void stage_plot(const ExperimentConfig& cfg, const std::string& dir,
                const std::string& run_name) {
  RunPaths p{dir};
  RunPaths rp{p.agent_dir(run_name)};
  const std::string train_cmd =
      "vmav train --agent " + cfg.agent + " --dir " + dir;
  require_file(rp.root + "/train_metrics.csv", train_cmd);

  std::vector<MetricSeries> smoothed;
  MetricTable train = read_metrics_csv(rp.root + "/train_metrics.csv");
  for (std::size_t c = 1; c < train.columns.size(); ++c) {
    const std::string& col = train.columns[c];
    if (col == "env_steps") continue;  // bookkeeping, not a curve
    smoothed.push_back(plot_column(train, col, run_name,
                                   column_rho(cfg, col),
                                   rp.root + "/" + col + ".svg"));
  }
  if (file_exists(rp.root + "/eval_metrics.csv")) {
    MetricTable ev = read_metrics_csv(rp.root + "/eval_metrics.csv");
    for (std::size_t c = 1; c < ev.columns.size(); ++c) {
      const std::string& col = ev.columns[c];
      smoothed.push_back(plot_column(ev, col, run_name,
                                     column_rho(cfg, col),
                                     rp.root + "/" + col + ".svg"));
    }
  }
  write_series_csv(smoothed, rp.root + "/smoothed.csv");
}

void stage_histogram(const ExperimentConfig& cfg, const std::string& dir) {
  RunPaths p{dir};
  std::vector<double> lengths;
  if (file_exists(p.lengths_csv())) {
    MetricTable t = read_metrics_csv(p.lengths_csv());
    lengths = t.series("length").values;
  } else {
    require_file(p.episodes(), collect_cmd(dir));
    EpisodeStore store = read_episodes(p.episodes());
    for (long n : episode_lengths(store)) lengths.push_back(double(n));
  }
  VMAV_CHECK(!lengths.empty(), "histogram: no episode lengths");

  double max_len = 0.0;
  for (double v : lengths) max_len = std::max(max_len, v);
  const int width = 8;
  const int bins = std::max(1, int((max_len + width) / width));
  std::vector<double> edges, counts(std::size_t(bins), 0.0);
  for (int b = 0; b <= bins; ++b) edges.push_back(double(b * width));
  for (double v : lengths) {
    int b = std::min(bins - 1, int(v / width));
    counts[std::size_t(b)] += 1.0;
  }

  MetricTable t;
  t.columns = {"bin_lo", "bin_hi", "count"};
  for (int b = 0; b < bins; ++b)
    t.add_row({edges[std::size_t(b)], edges[std::size_t(b) + 1],
               counts[std::size_t(b)]});
  write_metrics_csv(t, p.histogram_csv());
  write_svg_histogram(edges, counts, "episode length", p.histogram_svg());
}

void run_sensitivity(const ExperimentConfig& cfg, const std::string& dir) {
  validate_config(cfg);
  RunPaths p{dir};
  require_file(p.vae_ckpt(), train_vae_cmd(dir));
  require_file(p.latents(), train_vae_cmd(dir));

  auto vae = load_vae(cfg, p.vae_ckpt());
  EpisodeStore latents = read_episodes(p.latents());

  const std::vector<double> taus = {0.6, 0.8, 1.0, 1.2};
  const std::vector<int> lengths = {16, 32};

  for (int L : lengths) {
    ExperimentConfig lcfg = cfg;
    lcfg.seq_length = L;
    validate_config(lcfg);

    // World model and value function are shared by the four tau cells of
    // this sequence length; their artifacts live in a cache directory.
    RunPaths lp{dir + "/sens-shared-L" + std::to_string(L)};
    ensure_dir(lp.root);
    SequenceDataset data =
        build_sequence_dataset(latents, L, lcfg.seq_train_episodes);
    MdnTrainResult mdn = train_mdnrnn(data, lcfg);
    write_checkpoint(mdn.mdn->params, lp.mdn_ckpt());
    write_metrics_csv(mdn.metrics, lp.mdn_metrics());
    AvfTrainResult avf = pretrain_avf(data, *mdn.mdn, lcfg);
    write_checkpoint(avf.avf->params, lp.avf_ckpt());
    write_metrics_csv(avf.metrics, lp.avf_metrics());
    save_config(lcfg, lp.config_file());

    MetricSeries done_acc = mdn.metrics.series("done_accuracy");
    MetricSeries ls_curve = mdn.metrics.series("heldout_ls");

    for (double tau : taus) {
      ExperimentConfig ccfg = lcfg;
      ccfg.tau = tau;
      ccfg.env_mode = "dream";
      validate_config(ccfg);

      char tag[64];
      std::snprintf(tag, sizeof tag, "sens-tau%.1f-L%d", tau, L);
      RunPaths cellp{dir + "/" + std::string(tag)};
      ensure_dir(cellp.root);

      TrainAgentResult res =
          train_agent(ccfg, vae, mdn.mdn, avf.avf.get(), &latents);
      write_metrics_csv(res.metrics, cellp.root + "/train_metrics.csv");
      write_metrics_csv(res.eval_metrics, cellp.root + "/eval_metrics.csv");
      write_checkpoint(res.agent.policy->params, cellp.root + "/policy.vmck");
      write_checkpoint(res.agent.critic->params(), cellp.root + "/critic.vmck");
      save_config(ccfg, cellp.config_file());

      // Per-cell curves: dream reward and the world model's held-out done
      // accuracy over its training updates.
      plot_column(res.metrics, "reward", tag, ccfg.smooth_reward_rho,
                  cellp.root + "/reward.svg");
      MetricTable dt;
      dt.columns = {"update", "done_accuracy", "heldout_ls"};
      for (std::size_t i = 0; i < done_acc.size(); ++i)
        dt.add_row({done_acc.steps[i], done_acc.values[i],
                    ls_curve.values[i]});
      write_metrics_csv(dt, cellp.root + "/done_accuracy.csv");
      write_svg_lines({done_acc}, "done_accuracy",
                      cellp.root + "/done_accuracy.svg");

      Provenance prov{"sensitivity-cell"};
      prov.note("seed", std::to_string(ccfg.seed));
      prov.note("tau", std::to_string(tau));
      prov.note("seq_length", std::to_string(L));
      prov.note("real_episodes_eval",
                std::to_string(res.real_episodes_eval));
      prov.note("real_steps_train", std::to_string(res.real_steps_train));
      prov.file("consumed", "vae.vmck", p.vae_ckpt());
      prov.file("consumed", "latents.vmep", p.latents());
      prov.file("consumed", "sens-shared-L" + std::to_string(L) + "/mdn.vmck",
                lp.mdn_ckpt());
      prov.file("consumed", "sens-shared-L" + std::to_string(L) + "/avf.vmck",
                lp.avf_ckpt());
      prov.file("produced", std::string(tag) + "/train_metrics.csv",
                cellp.root + "/train_metrics.csv");
      prov.file("produced", std::string(tag) + "/done_accuracy.csv",
                cellp.root + "/done_accuracy.csv");
      prov.write(cellp.provenance("train"));
    }
  }
}

}  // namespace vmav
