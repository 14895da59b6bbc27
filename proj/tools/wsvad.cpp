#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <CLI11.hpp>
#include <cstdio>
#include <iostream>

#include "wsvad/cli/commands.hpp"
#include "wsvad/common/binary_io.hpp"
#include "wsvad/common/error.hpp"

namespace {

using namespace wsvad;
using namespace wsvad::cli;

struct ThresholdFlags {
  std::optional<double> phi;
  std::optional<double> phi_low;
  std::optional<double> phi_hi;

  void add(CLI::App* app) {
    auto* simple = app->add_option("--phi", phi, "Simple threshold");
    auto* low = app->add_option("--phi-low", phi_low, "Double threshold: region threshold");
    auto* hi = app->add_option("--phi-hi", phi_hi, "Double threshold: seed threshold");
    simple->excludes(low)->excludes(hi);
  }

  std::optional<eval::ThresholdConfig> get(const PipelineConfig& defaults) const {
    if (phi) return eval::ThresholdConfig::simple(*phi);
    if (!phi_low && !phi_hi) return std::nullopt;
    const auto& d = defaults.threshold;
    const bool was_dual = d.mode == eval::ThresholdMode::kDouble;
    return eval::ThresholdConfig::dual(phi_low.value_or(was_dual ? d.phi_low : 0.1),
                                       phi_hi.value_or(was_dual ? d.phi_hi : 0.5));
  }
};

void add_common(CLI::App* app, CommonOptions& c) {
  app->add_option("--config", c.config, "JSON config overriding the defaults");
  app->add_option("--seed", c.seed, "Base seed for every random stream");
  app->add_option("--threads", c.threads, "Worker threads")->check(CLI::PositiveNumber);
}

void add_scoring(CLI::App* app, ScoreOptions& o) {
  add_common(app, o.common);
  app->add_option("--probs", o.probs, "Probability archive written by infer")->required();
  app->add_option("--labels", o.labels, "Reference segment file");
  app->add_option("--manifest", o.manifest, "Manifest restricting (or supplying) the references");
}

}  // namespace

int main(int argc, char** argv) {
  spdlog::set_default_logger(spdlog::stderr_color_mt("wsvad"));
  spdlog::set_pattern("[%H:%M:%S] [%l] %v");

  CLI::App app{"Voice activity detection with teacher-student training"};
  app.require_subcommand(1);
  bool quiet = false;
  app.add_flag("-q,--quiet", quiet, "Only log warnings and errors");

  // synth-toy
  ToyCorpusSpec toy;
  fs::path toy_out, toy_spec;
  std::size_t toy_threads = 1;
  auto* synth = app.add_subcommand("synth-toy", "Write a synthetic corpus with exact references");
  synth->add_option("--out", toy_out, "Output directory")->required();
  synth->add_option("--spec", toy_spec, "JSON corpus spec (flags override it)");
  auto* toy_clips = synth->add_option("--clips", toy.n_clips, "Number of clips");
  auto* toy_dur = synth->add_option("--duration", toy.clip_dur_s, "Clip duration in seconds");
  auto* toy_speech = synth->add_option("--speech-rate", toy.speech_event_rate, "Mean speech events per clip");
  auto* toy_noise = synth->add_option("--noise-rate", toy.noise_event_rate, "Mean noise bursts per clip");
  auto* toy_tone = synth->add_option("--tone-rate", toy.tone_event_rate, "Mean tones per clip");
  auto* toy_prefix = synth->add_option("--id-prefix", toy.id_prefix, "Clip id prefix");
  auto* toy_seed = synth->add_option("--seed", toy.seed, "Corpus seed");
  synth->add_option("--threads", toy_threads, "Worker threads")->check(CLI::PositiveNumber);

  // train-teacher / train-student
  TrainOptions teacher, student;
  auto* tt = app.add_subcommand("train-teacher", "Train a clip-supervised teacher");
  auto* ts = app.add_subcommand("train-student", "Train a frame-supervised student on distilled labels");
  for (auto [cmd, o] : {std::pair{tt, &teacher}, std::pair{ts, &student}}) {
    add_common(cmd, o->common);
    cmd->add_option("--manifest", o->manifest, "Training manifest")->required();
    cmd->add_option("--out", o->out, "Model file to write")->required();
    cmd->add_option("--log", o->log, "NDJSON training log (default <out>.log.ndjson)");
    cmd->add_option("--checkpoint", o->checkpoint, "Checkpoint file");
    cmd->add_flag("--resume", o->resume, "Continue from --checkpoint")->needs("--checkpoint");
    cmd->add_option("--epochs", o->epochs, "Override the configured epoch count");
  }
  ts->add_option("--labels", student.labels, "Distilled label archive")->required();

  // distill-labels
  DistillOptions dist;
  std::string scheme = "soft";
  auto* dl = app.add_subcommand("distill-labels", "Produce frame targets with a teacher");
  add_common(dl, dist.common);
  dl->add_option("--model", dist.model, "Teacher model")->required();
  dl->add_option("--manifest", dist.manifest, "Clips to label")->required();
  dl->add_option("--out", dist.out, "Label archive to write")->required();
  dl->add_option("--scheme", scheme, "soft, hard or dynamic")
      ->check(CLI::IsMember({"soft", "hard", "dynamic"}));
  dl->add_option("--fraction", dist.fraction, "Dynamic scheme: fraction of speech frames hardened");

  // infer
  InferOptions inf;
  ThresholdFlags inf_th;
  auto* in = app.add_subcommand("infer", "Speech probabilities and segments for each clip");
  add_common(in, inf.common);
  in->add_option("--model", inf.model, "Model file")->required();
  in->add_option("--manifest", inf.manifest, "Clips to process")->required();
  in->add_option("--out", inf.out, "Probability archive to write")->required();
  in->add_option("--segments", inf.segments, "Segment file (default <out>.segments.tsv)");
  inf_th.add(in);

  // evaluate
  ScoreOptions ev;
  ThresholdFlags ev_th;
  auto* evc = app.add_subcommand("evaluate", "Score probabilities against references");
  add_scoring(evc, ev);
  evc->add_option("--out", ev.out, "Report JSON to write");
  evc->add_option("--roc", ev.roc, "ROC CSV to write");
  ev_th.add(evc);

  // sweep-thresholds
  ScoreOptions sw;
  std::vector<double> phis{0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 0.7};
  auto* swc = app.add_subcommand("sweep-thresholds", "Report metrics at several simple thresholds");
  add_scoring(swc, sw);
  swc->add_option("--out", sw.out, "CSV to write")->required();
  swc->add_option("--thresholds", phis, "Comma-separated thresholds")->delimiter(',');

  // roc-export
  ScoreOptions roc;
  auto* rc = app.add_subcommand("roc-export", "Write the pooled ROC curve as CSV");
  add_scoring(rc, roc);
  rc->add_option("--out", roc.out, "CSV to write")->required();

  // mix-snr
  MixOptions mix;
  mix.snr_db = {-5, 0, 5, 10, 15, 20};
  auto* mx = app.add_subcommand("mix-snr", "Noise-corrupted copies of a manifest at fixed SNRs");
  add_common(mx, mix.common);
  mx->add_option("--manifest", mix.manifest, "Clean clips")->required();
  mx->add_option("--noise", mix.noise, "Manifest of noise clips")->required();
  mx->add_option("--snr", mix.snr_db, "Comma-separated SNRs in dB")->delimiter(',');
  mx->add_option("--out", mix.out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }
  if (quiet) spdlog::set_level(spdlog::level::warn);

  try {
    if (synth->parsed()) {
      ToyCorpusSpec spec;
      if (!toy_spec.empty()) {
        spec = ToyCorpusSpec::from_json(nlohmann::json::parse(io::read_file(toy_spec)));
      }
      if (*toy_clips) spec.n_clips = toy.n_clips;
      if (*toy_dur) spec.clip_dur_s = toy.clip_dur_s;
      if (*toy_speech) spec.speech_event_rate = toy.speech_event_rate;
      if (*toy_noise) spec.noise_event_rate = toy.noise_event_rate;
      if (*toy_tone) spec.tone_event_rate = toy.tone_event_rate;
      if (*toy_prefix) spec.id_prefix = toy.id_prefix;
      if (*toy_seed) spec.seed = toy.seed;
      cmd_synth_toy(spec, toy_out, toy_threads);
    } else if (tt->parsed()) {
      cmd_train_teacher(teacher);
    } else if (ts->parsed()) {
      cmd_train_student(student);
    } else if (dl->parsed()) {
      dist.scheme = distill::label_scheme_from_string(scheme);
      cmd_distill(dist);
    } else if (in->parsed()) {
      inf.threshold = inf_th.get(load_config(inf.common.config));
      cmd_infer(inf);
    } else if (evc->parsed()) {
      ev.threshold = ev_th.get(load_config(ev.common.config));
      const auto r = cmd_evaluate(ev);
      std::cout << r.report.to_json().dump(2) << '\n';
    } else if (swc->parsed()) {
      for (const auto& row : cmd_sweep(sw, phis)) {
        std::cout << "phi=" << row.phi << " f1=" << eval::round2(row.report.f1)
                  << " fer=" << eval::round2(row.report.fer)
                  << " event_f1=" << eval::round2(row.report.event_f1) << '\n';
      }
    } else if (rc->parsed()) {
      cmd_roc_export(roc);
    } else if (mx->parsed()) {
      cmd_mix_snr(mix);
    }
  } catch (const nlohmann::json::exception& e) {
    spdlog::error("{}", e.what());
    return kExitUsage;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return exit_code_for(e);
  }
  return kExitOk;
}
