#include <cstdio>
#include <exception>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "vmav/experiment.hpp"

namespace {

struct CommonArgs {
  std::string dir = "runs/default";
  std::string config_file;
  std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--dir", args.dir, "run directory")
      ->capture_default_str();
  cmd->add_option("--config", args.config_file, "config file to load");
  cmd->add_option("--set", args.overrides,
                  "override a config entry, key=value (repeatable)");
}

vmav::ExperimentConfig resolve_config(const CommonArgs& args) {
  vmav::ExperimentConfig cfg;
  if (!args.config_file.empty()) cfg = vmav::load_config(args.config_file);
  vmav::apply_overrides(cfg, args.overrides);
  vmav::validate_config(cfg);
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"vmav: latent world-model cart-pole experiments"};
  app.require_subcommand(0, 1);

  CommonArgs collect_args, vae_args, mdn_args, avf_args, train_args,
      eval_args, sens_args, plot_args, hist_args;
  std::string train_agent_name, train_env, train_run;
  std::string eval_run, plot_run;
  long eval_episodes = 100;

  CLI::App* collect = app.add_subcommand(
      "collect", "roll random episodes and store rendered frames");
  add_common(collect, collect_args);

  CLI::App* train_vae = app.add_subcommand(
      "train-vae", "train the frame autoencoder and encode all episodes");
  add_common(train_vae, vae_args);

  CLI::App* train_mdn = app.add_subcommand(
      "train-mdnrnn", "train the latent dynamics model");
  add_common(train_mdn, mdn_args);

  CLI::App* pre_avf = app.add_subcommand(
      "pretrain-avf", "pretrain the attentive value function");
  add_common(pre_avf, avf_args);

  CLI::App* train = app.add_subcommand("train", "train a control agent");
  add_common(train, train_args);
  train->add_option("--agent", train_agent_name, "cp, mrp or vmavc");
  train->add_option("--env", train_env, "real or dream");
  train->add_option("--run", train_run,
                    "run subdirectory name (default agent-env-seed)");

  CLI::App* evaluate = app.add_subcommand(
      "evaluate", "greedy evaluation of a trained run in the real env");
  add_common(evaluate, eval_args);
  evaluate->add_option("--run", eval_run, "run subdirectory name")
      ->required();
  evaluate->add_option("--episodes", eval_episodes, "episode count")
      ->capture_default_str();

  CLI::App* sensitivity = app.add_subcommand(
      "sensitivity", "tau x sequence-length grid of dream-trained agents");
  add_common(sensitivity, sens_args);

  CLI::App* plot = app.add_subcommand(
      "plot", "render metric curves (raw + smoothed) for a run");
  add_common(plot, plot_args);
  plot->add_option("--run", plot_run, "run subdirectory name")->required();

  CLI::App* histogram = app.add_subcommand(
      "histogram", "episode-length histogram of the collected data");
  add_common(histogram, hist_args);

  CLI11_PARSE(app, argc, argv);

  try {
    if (collect->parsed()) {
      auto cfg = resolve_config(collect_args);
      vmav::stage_collect(cfg, collect_args.dir);
      std::printf("collected %ld episodes into %s\n", cfg.collect_episodes,
                  collect_args.dir.c_str());
    } else if (train_vae->parsed()) {
      auto cfg = resolve_config(vae_args);
      auto res = vmav::stage_train_vae(cfg, vae_args.dir);
      std::printf("vae trained: held-out mse %.6f -> %.6f\n",
                  res.heldout_mse_untrained, res.heldout_mse_trained);
    } else if (train_mdn->parsed()) {
      auto cfg = resolve_config(mdn_args);
      auto res = vmav::stage_train_mdn(cfg, mdn_args.dir);
      std::printf(
          "mdn trained: held-out nll %.4f (baseline %.4f), "
          "done accuracy %.4f (majority %.4f)\n",
          res.final_eval.ls, res.baseline_gaussian_nll,
          res.final_eval.done_acc, res.majority_accuracy);
    } else if (pre_avf->parsed()) {
      auto cfg = resolve_config(avf_args);
      auto res = vmav::stage_pretrain_avf(cfg, avf_args.dir);
      const auto& loss = res.metrics.rows;
      std::printf("avf pretrained: loss %.6f -> %.6f over %zu updates\n",
                  loss.front()[1], loss.back()[1], loss.size());
    } else if (train->parsed()) {
      CommonArgs args = train_args;
      if (!train_agent_name.empty())
        args.overrides.push_back("agent=" + train_agent_name);
      if (!train_env.empty())
        args.overrides.push_back("env_mode=" + train_env);
      auto cfg = resolve_config(args);
      const std::string run =
          train_run.empty() ? vmav::default_run_name(cfg) : train_run;
      auto res = vmav::stage_train_agent(cfg, args.dir, run);
      const auto& ev = res.eval_metrics.rows;
      std::printf("trained %s (%s env) -> %s/%s; final eval %.2f +- %.2f\n",
                  cfg.agent.c_str(), cfg.env_mode.c_str(), args.dir.c_str(),
                  run.c_str(), ev.back()[1], ev.back()[2]);
    } else if (evaluate->parsed()) {
      auto cfg = resolve_config(eval_args);
      auto res =
          vmav::stage_evaluate(cfg, eval_args.dir, eval_run, eval_episodes);
      std::printf("eval %s: mean %.2f +- %.2f over %ld episodes\n",
                  eval_run.c_str(), res.mean, res.stddev, eval_episodes);
    } else if (sensitivity->parsed()) {
      auto cfg = resolve_config(sens_args);
      vmav::run_sensitivity(cfg, sens_args.dir);
      std::printf("sensitivity grid written under %s\n",
                  sens_args.dir.c_str());
    } else if (plot->parsed()) {
      auto cfg = resolve_config(plot_args);
      vmav::stage_plot(cfg, plot_args.dir, plot_run);
      std::printf("plots written under %s/%s\n", plot_args.dir.c_str(),
                  plot_run.c_str());
    } else if (histogram->parsed()) {
      auto cfg = resolve_config(hist_args);
      vmav::stage_histogram(cfg, hist_args.dir);
      std::printf("histogram written under %s\n", hist_args.dir.c_str());
    } else {
      std::puts("no subcommand given; run with --help");
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
