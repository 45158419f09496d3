#include "cfm/commands.hpp"

#include <CLI11.hpp>

#include <iostream>

int main(int argc, char** argv) {
  CLI::App app{"Cumulative flow maps: train, sample, verify, eval, plot"};
  app.require_subcommand(1);

  cfm::TrainOptions train;
  std::string train_out;
  long train_steps = -1;
  std::uint64_t train_seed = 0;
  auto* t = app.add_subcommand("train", "Train a cumulative field from a config file");
  t->add_option("--config", train.config, "Config file")->required();
  auto* t_steps = t->add_option("--steps", train_steps, "Override training.steps");
  auto* t_seed = t->add_option("--seed", train_seed, "Override run.seed");
  auto* t_out = t->add_option("--out", train_out, "Output directory");

  cfm::SampleOptions samp;
  std::string samp_out, samp_image;
  auto* s = app.add_subcommand("sample", "Generate samples from a checkpoint");
  s->add_option("--checkpoint", samp.checkpoint, "Checkpoint file")->required();
  s->add_option("--steps", samp.steps, "Sampling steps")->capture_default_str();
  s->add_option("--samples", samp.samples, "Number of samples")->capture_default_str();
  s->add_option("--seed", samp.seed, "Noise seed")->capture_default_str();
  auto* s_out = s->add_option("--out", samp_out, "Samples CSV path");
  auto* s_image = s->add_option("--image", samp_image, "Optional scatter image (PPM)");

  cfm::VerifyCommandOptions ver;
  std::string ver_form, ver_out;
  auto* v = app.add_subcommand("verify", "Run the property and oracle checks");
  auto* v_form = v->add_option("--formulation", ver_form, "Restrict to ufm, x1fm, ddim or edm");
  v->add_option("--tolerance", ver.tolerance, "Override a tolerance: check_id=value (repeatable)");
  v->add_option("--check", ver.checks, "Run only this check (repeatable)");
  auto* v_out = v->add_option("--out", ver_out, "Report CSV path");
  v->add_flag("--negative-control", ver.negative_control, "Corrupt the sign of F when inverting flow maps");

  cfm::EvalOptions ev;
  std::string ev_ledger;
  auto* e = app.add_subcommand("eval", "Compare samples with a fresh reference draw");
  e->add_option("--samples", ev.samples, "Samples CSV")->required();
  e->add_option("--reference", ev.reference, "Reference dataset id")->required();
  e->add_option("--seed", ev.seed, "Reference seed")->capture_default_str();
  auto* e_out = e->add_option("--out", ev_ledger, "Metrics ledger CSV (appended)");

  cfm::PlotOptions pl;
  std::string pl_out;
  auto* p = app.add_subcommand("plot", "Render samples as a scatter image (PPM)");
  p->add_option("--samples", pl.samples, "Samples CSV")->required();
  auto* p_out = p->add_option("--out", pl_out, "Image path");

  cfm::DatasetOptions ds;
  std::string ds_out;
  auto* d = app.add_subcommand("dataset", "Export a toy dataset as CSV");
  d->add_option("--id", ds.id, "Dataset id")->required();
  d->add_option("--samples", ds.n, "Number of points")->capture_default_str();
  d->add_option("--seed", ds.seed, "Seed")->capture_default_str();
  auto* d_out = d->add_option("--out", ds_out, "CSV path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? 0 : cfm::kExitConfig;
  }

  if (t->parsed()) {
    if (t_steps->count()) train.steps = train_steps;
    if (t_seed->count()) train.seed = train_seed;
    if (t_out->count()) train.out = train_out;
    return cfm::cmd_train(train, std::cout, std::cerr);
  }
  if (s->parsed()) {
    if (s_out->count()) samp.out = samp_out;
    if (s_image->count()) samp.image = samp_image;
    return cfm::cmd_sample(samp, std::cout, std::cerr);
  }
  if (v->parsed()) {
    if (v_form->count()) ver.formulation = ver_form;
    if (v_out->count()) ver.out = ver_out;
    return cfm::cmd_verify(ver, std::cout, std::cerr);
  }
  if (e->parsed()) {
    if (e_out->count()) ev.ledger = ev_ledger;
    return cfm::cmd_eval(ev, std::cout, std::cerr);
  }
  if (p->parsed()) {
    if (p_out->count()) pl.out = pl_out;
    return cfm::cmd_plot(pl, std::cout, std::cerr);
  }
  if (d->parsed()) {
    if (d_out->count()) ds.out = ds_out;
    return cfm::cmd_dataset(ds, std::cout, std::cerr);
  }
  return cfm::kExitConfig;
}
