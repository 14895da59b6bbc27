#include "wsvad/cli/commands.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <charconv>
#include <map>
#include <set>

#include "wsvad/common/binary_io.hpp"
#include "wsvad/common/error.hpp"
#include "wsvad/common/parallel.hpp"
#include "wsvad/common/rng.hpp"
#include "wsvad/distill/archive.hpp"
#include "wsvad/dsp/mix.hpp"
#include "wsvad/dsp/resample.hpp"
#include "wsvad/eval/label_io.hpp"
#include "wsvad/nn/model_io.hpp"

namespace wsvad::cli {

namespace {

std::string format_number(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

std::string join_ids(const std::vector<std::string>& ids, std::size_t limit = 20) {
  std::string out;
  for (std::size_t i = 0; i < ids.size() && i < limit; ++i) {
    if (i) out += ", ";
    out += ids[i];
  }
  if (ids.size() > limit) out += ", ... (" + std::to_string(ids.size()) + " total)";
  return out;
}

fs::path with_suffix(const fs::path& p, const std::string& suffix) {
  return fs::path(p.string() + suffix);
}

void require(const fs::path& p, const char* what) {
  if (p.empty()) throw InvalidInput(std::string("missing required path: ") + what);
}

void ensure_parent(const fs::path& p) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
}

std::uint64_t stage_seed(const CommonOptions& c, std::uint64_t config_seed, const char* stage) {
  return c.seed ? derive_seed(*c.seed, stage) : config_seed;
}

Manifest read_nonempty_manifest(const fs::path& path) {
  require(path, "--manifest");
  auto m = read_manifest(path);
  if (m.empty()) throw InvalidInput("manifest has no clips: " + path.string());
  return m;
}

train::FitResult run_fit(nn::Crnn<float> model, const std::vector<train::TrainItem>& items,
                         train::TrainMode mode, const train::TrainConfig& tc,
                         const TrainOptions& opts) {
  const auto log = opts.log.empty() ? with_suffix(opts.out, ".log.ndjson") : opts.log;
  ensure_parent(opts.out);
  if (!opts.resume) fs::remove(log);
  train::FitOptions fo;
  fo.checkpoint = opts.checkpoint;
  fo.resume = opts.resume;
  fo.log_path = log;
  fo.on_record = [](const train::LogRecord& r) {
    if (r.split == "cv") {
      spdlog::info("epoch {} step {} cv loss {:.5f} lr {:.2e}", r.epoch, r.step, r.loss, r.lr);
    }
  };
  spdlog::info("{} training on {} clips ({} parameters)", train::to_string(mode), items.size(),
               nn::count_params(model.params()));
  auto result = train::fit(std::move(model), items, mode, tc, fo);
  if (result.diverged) {
    throw TrainingDiverged("training diverged (non-finite cross-validation loss); no model written");
  }
  nn::save_model(opts.out, result.model);
  spdlog::info("best cv loss {:.5f}; model written to {}", result.best_cv_loss, opts.out.string());
  return result;
}

eval::EvalOptions eval_options(const PipelineConfig& cfg,
                               const std::optional<eval::ThresholdConfig>& threshold) {
  eval::EvalOptions eo;
  eo.threshold = threshold.value_or(cfg.threshold);
  eo.threshold.validate();
  eo.hop_s = cfg.dsp.hop_s;
  return eo;
}

eval::EvalResult score(const ScoreOptions& opts, const PipelineConfig& cfg,
                       const std::optional<eval::ThresholdConfig>& threshold) {
  require(opts.probs, "--probs");
  const distill::LabelArchive archive(opts.probs);
  const auto refs = load_references(opts.labels, opts.manifest, cfg.speech_label);
  return eval::evaluate_run(archive.read_all(), refs, eval_options(cfg, threshold));
}

std::string csv_field(const std::optional<double>& v) {
  return v ? format_number(*v) : std::string();
}

}  // namespace

int exit_code_for(const std::exception& e) noexcept {
  if (dynamic_cast<const InvalidInput*>(&e) || dynamic_cast<const FormatError*>(&e) ||
      dynamic_cast<const ShapeError*>(&e)) {
    return kExitUsage;
  }
  return kExitFailure;
}

std::vector<dsp::LogMelSpec> manifest_features(const Manifest& m, const dsp::DspConfig& cfg,
                                               std::size_t threads) {
  cfg.validate();
  std::vector<dsp::LogMelSpec> out(m.size());
  parallel_for(m.size(), threads, [&](std::size_t i) {
    const auto& row = m.rows[i];
    out[i] = dsp::extract_features(dsp::read_wav(row.audio_path, row.clip_id), cfg);
    out[i].clip_id = row.clip_id;
  });
  return out;
}

std::map<std::string, std::vector<eval::Segment>> load_references(const fs::path& labels,
                                                                  const fs::path& manifest,
                                                                  const std::string& label) {
  std::map<std::string, std::vector<eval::Segment>> refs;
  std::optional<Manifest> m;
  if (!manifest.empty()) m = read_manifest(manifest);
  if (!labels.empty()) {
    refs = eval::read_segments(labels, label);
  } else if (m) {
    std::set<fs::path> files;
    std::vector<std::string> unlabeled;
    for (const auto& r : m->rows) {
      if (r.frame_labels) files.insert(*r.frame_labels);
      else unlabeled.push_back(r.clip_id);
    }
    if (!unlabeled.empty()) {
      throw InvalidInput("manifest clips without frame_labels: " + join_ids(unlabeled));
    }
    for (const auto& f : files) refs.merge(eval::read_segments(f, label));
  } else {
    throw InvalidInput("reference labels need --labels or a manifest with frame_labels");
  }
  if (!m) return refs;
  std::map<std::string, std::vector<eval::Segment>> restricted;
  std::vector<std::string> missing;
  for (const auto& id : m->ids()) {
    auto it = refs.find(id);
    if (it == refs.end()) missing.push_back(id);
    else restricted.emplace(id, it->second);
  }
  if (!missing.empty()) {
    throw InvalidInput("no reference labels for manifest clips: " + join_ids(missing));
  }
  return restricted;
}

train::FitResult cmd_train_teacher(const TrainOptions& opts) {
  require(opts.out, "--out");
  const auto cfg = load_config(opts.common.config);
  const auto m = read_nonempty_manifest(opts.manifest);
  const auto vocab = m.label_vocabulary();
  const auto speech = std::find(vocab.begin(), vocab.end(), cfg.speech_label);
  if (speech == vocab.end()) {
    throw InvalidInput("no clip in the manifest is labeled '" + cfg.speech_label + "'");
  }
  auto arch = cfg.teacher_model;
  arch.num_outputs = vocab.size();
  arch.output_labels = vocab;
  arch.speech_index = static_cast<std::size_t>(speech - vocab.begin());
  arch.validate();

  auto tc = cfg.teacher_train;
  tc.seed = stage_seed(opts.common, tc.seed, "teacher");
  tc.threads = opts.common.threads;
  if (opts.epochs) tc.epochs = *opts.epochs;
  tc.validate();

  const auto feats = manifest_features(m, cfg.dsp, opts.common.threads);
  std::vector<train::TrainItem> items(m.size());
  for (std::size_t i = 0; i < m.size(); ++i) {
    items[i].id = m.rows[i].clip_id;
    items[i].features = feats[i].values;
    items[i].clip_targets.assign(vocab.size(), 0.0f);
    for (const auto& l : m.rows[i].clip_labels) {
      items[i].clip_targets[std::find(vocab.begin(), vocab.end(), l) - vocab.begin()] = 1.0f;
    }
  }
  nn::Crnn<float> model(arch);
  model.initialize(derive_seed(tc.seed, "init"));
  return run_fit(std::move(model), items, train::TrainMode::kClip, tc, opts);
}

train::FitResult cmd_train_student(const TrainOptions& opts) {
  require(opts.out, "--out");
  require(opts.labels, "--labels");
  const auto cfg = load_config(opts.common.config);
  const auto m = read_nonempty_manifest(opts.manifest);
  std::map<std::string, distill::StudentTargets> targets;
  for (auto& t : distill::read_targets(opts.labels)) targets.emplace(t.clip_id, std::move(t));
  std::vector<std::string> missing;
  for (const auto& id : m.ids()) {
    if (!targets.count(id)) missing.push_back(id);
  }
  if (!missing.empty()) {
    throw InvalidInput("label archive has no targets for: " + join_ids(missing));
  }

  auto tc = cfg.student_train;
  tc.seed = stage_seed(opts.common, tc.seed, "student");
  tc.threads = opts.common.threads;
  if (opts.epochs) tc.epochs = *opts.epochs;
  tc.validate();

  const auto feats = manifest_features(m, cfg.dsp, opts.common.threads);
  std::vector<train::TrainItem> items(m.size());
  std::vector<std::string> misaligned;
  for (std::size_t i = 0; i < m.size(); ++i) {
    const auto& t = targets.at(m.rows[i].clip_id);
    if (t.values.rows() != feats[i].frames()) {
      misaligned.push_back(m.rows[i].clip_id + " (" + std::to_string(t.values.rows()) + " vs " +
                           std::to_string(feats[i].frames()) + " frames)");
    }
    items[i].id = m.rows[i].clip_id;
    items[i].features = feats[i].values;
    items[i].frame_targets = t.values;
  }
  if (!misaligned.empty()) {
    throw InvalidInput("label frames do not match features: " + join_ids(misaligned));
  }
  nn::Crnn<float> model(cfg.student_model);
  model.initialize(derive_seed(tc.seed, "init"));
  return run_fit(std::move(model), items, train::TrainMode::kFrame, tc, opts);
}

distill::DistillReport cmd_distill(const DistillOptions& opts) {
  require(opts.model, "--model");
  require(opts.manifest, "--manifest");
  require(opts.out, "--out");
  const auto cfg = load_config(opts.common.config);
  const auto m = read_manifest(opts.manifest);
  const auto teacher = nn::load_model(opts.model);
  auto dc = cfg.distill;
  dc.speech_index = teacher.config().speech_index;
  dc.seed = stage_seed(opts.common, dc.seed, "distill");
  if (opts.fraction) dc.dynamic_fraction = *opts.fraction;
  dc.validate();

  std::vector<distill::ClipSource> clips;
  for (const auto& r : m.rows) clips.push_back({r.clip_id, r.audio_path});
  auto report = distill::distill_corpus(teacher, clips, dc, opts.scheme, cfg.dsp, opts.common.threads);
  ensure_parent(opts.out);
  distill::write_targets(opts.out, report.targets);
  const auto skipped_path = with_suffix(opts.out, ".skipped.tsv");
  if (report.skipped.empty()) {
    fs::remove(skipped_path);
  } else {
    std::string tsv = "clip_id\treason\n";
    for (const auto& s : report.skipped) {
      spdlog::warn("skipped {}: {}", s.id, s.reason);
      tsv += s.id + '\t' + s.reason + '\n';
    }
    io::write_file_atomic(skipped_path, tsv);
  }
  spdlog::info("distilled {} of {} clips ({} labels) to {}", report.targets.size(),
               report.requested, distill::to_string(opts.scheme), opts.out.string());
  if (report.too_many_skipped()) {
    throw Error("more than 10% of clips were skipped (" + std::to_string(report.skipped.size()) +
                " of " + std::to_string(report.requested) + ")");
  }
  return report;
}

std::vector<distill::FrameRecord> cmd_infer(const InferOptions& opts) {
  require(opts.model, "--model");
  require(opts.out, "--out");
  const auto cfg = load_config(opts.common.config);
  const auto m = read_manifest(opts.manifest);
  const auto model = nn::load_model(opts.model);
  const auto threshold = opts.threshold.value_or(cfg.threshold);
  threshold.validate();
  const std::size_t speech = model.config().speech_index;

  std::vector<distill::FrameRecord> records(m.size());
  std::vector<eval::SegmentList> segments(m.size());
  parallel_for(m.size(), opts.common.threads, [&](std::size_t i) {
    const auto& row = m.rows[i];
    const auto probs = distill::teacher_probs(model, row.audio_path, cfg.dsp);
    Matrix<float> col(probs.rows(), 1);
    std::vector<float> p(probs.rows());
    for (std::size_t t = 0; t < probs.rows(); ++t) col(t, 0) = p[t] = probs(t, speech);
    records[i] = {row.clip_id, "probs", std::move(col)};
    segments[i] = {row.clip_id,
                   eval::decode_segments(eval::apply_threshold(p, threshold), cfg.dsp.hop_s)};
  });
  ensure_parent(opts.out);
  distill::write_archive(opts.out, records);
  const auto seg_path = opts.segments.empty() ? with_suffix(opts.out, ".segments.tsv") : opts.segments;
  eval::write_segments(seg_path, segments, cfg.speech_label);
  spdlog::info("wrote probabilities for {} clips to {}", records.size(), opts.out.string());
  return records;
}

eval::EvalResult cmd_evaluate(const ScoreOptions& opts) {
  const auto cfg = load_config(opts.common.config);
  auto result = score(opts, cfg, opts.threshold);
  const auto json = result.report.to_json().dump(2) + "\n";
  if (!opts.out.empty()) {
    ensure_parent(opts.out);
    io::write_file_atomic(opts.out, json);
  }
  if (!opts.roc.empty()) {
    ensure_parent(opts.roc);
    eval::write_roc_csv(opts.roc, result.roc);
  }
  return result;
}

std::vector<eval::RocPoint> cmd_roc_export(const ScoreOptions& opts) {
  require(opts.out, "--out");
  const auto cfg = load_config(opts.common.config);
  auto result = score(opts, cfg, std::nullopt);
  ensure_parent(opts.out);
  eval::write_roc_csv(opts.out, result.roc);
  return result.roc;
}

std::vector<SweepRow> cmd_sweep(const ScoreOptions& opts, const std::vector<double>& phis) {
  require(opts.out, "--out");
  if (phis.empty()) throw InvalidInput("threshold list is empty");
  const auto cfg = load_config(opts.common.config);
  require(opts.probs, "--probs");
  const auto records = distill::LabelArchive(opts.probs).read_all();
  const auto refs = load_references(opts.labels, opts.manifest, cfg.speech_label);
  std::vector<SweepRow> rows;
  std::string csv = "phi,precision,recall,f1,fer,auc,event_f1,p_fa,p_miss,map,d_prime\n";
  for (double phi : phis) {
    const auto r = eval::evaluate_run(records, refs,
                                      eval_options(cfg, eval::ThresholdConfig::simple(phi)));
    const auto& rep = r.report;
    const auto pct = [](const std::optional<double>& v) {
      return v ? std::optional<double>(eval::round2(*v)) : std::nullopt;
    };
    csv += format_number(phi) + ',' + format_number(eval::round2(rep.precision)) + ',' +
           format_number(eval::round2(rep.recall)) + ',' + format_number(eval::round2(rep.f1)) +
           ',' + format_number(eval::round2(rep.fer)) + ',' + csv_field(pct(rep.auc)) + ',' +
           format_number(eval::round2(rep.event_f1)) + ',' + csv_field(pct(rep.p_fa)) + ',' +
           csv_field(pct(rep.p_miss)) + ',' + csv_field(pct(rep.map)) + ',' +
           csv_field(rep.d_prime) + '\n';
    rows.push_back({phi, rep});
  }
  ensure_parent(opts.out);
  io::write_file_atomic(opts.out, csv);
  return rows;
}

std::vector<MixedSet> cmd_mix_snr(const MixOptions& opts) {
  require(opts.out, "--out");
  require(opts.noise, "--noise");
  if (opts.snr_db.empty()) throw InvalidInput("no SNR values given");
  for (double s : opts.snr_db) {
    if (!std::isfinite(s)) throw InvalidInput("SNR values must be finite");
  }
  const auto m = read_manifest(opts.manifest);
  const auto noise_m = read_nonempty_manifest(opts.noise);
  const std::uint64_t base = opts.common.seed.value_or(0);

  std::vector<dsp::AudioClip> noise(noise_m.size());
  parallel_for(noise.size(), opts.common.threads, [&](std::size_t i) {
    noise[i] = dsp::read_wav(noise_m.rows[i].audio_path, noise_m.rows[i].clip_id);
  });

  std::vector<MixedSet> sets;
  for (std::size_t s = 0; s < opts.snr_db.size(); ++s) {
    const double snr = opts.snr_db[s];
    MixedSet set;
    set.snr_db = snr;
    const auto dir = opts.out / ("snr_" + format_number(snr));
    fs::create_directories(dir / "audio");
    set.manifest.rows.resize(m.size());
    std::vector<std::string> report(m.size());
    parallel_for(m.size(), opts.common.threads, [&](std::size_t i) {
      const auto& row = m.rows[i];
      const auto speech = dsp::read_wav(row.audio_path, row.clip_id);
      auto pick = make_rng(base, "mix-noise", i);
      const auto& n = noise[std::uniform_int_distribution<std::size_t>(0, noise.size() - 1)(pick)];
      const auto noise_clip = n.sample_rate == speech.sample_rate ? n : dsp::resample(n, speech.sample_rate);
      const dsp::MixSpec spec{row.clip_id, n.id, snr, derive_seed(base, "mix", i, s)};
      const auto mixed = dsp::mix_components(speech, noise_clip, spec);
      const auto wav = dir / "audio" / (row.clip_id + ".wav");
      dsp::write_wav(wav, mixed.mixture);
      set.manifest.rows[i] = {row.clip_id, wav, row.clip_labels, row.frame_labels};
      report[i] = row.clip_id + '\t' + n.id + '\t' + format_number(snr) + '\t' +
                  format_number(dsp::measure_snr_db(mixed.speech, mixed.noise)) + '\t' +
                  format_number(mixed.gain) + '\n';
    });
    std::string tsv = "clip_id\tnoise_id\ttarget_snr_db\tmeasured_snr_db\tnoise_gain\n";
    for (const auto& line : report) tsv += line;
    io::write_file_atomic(dir / "mix_report.tsv", tsv);
    set.manifest_path = dir / "manifest.tsv";
    write_manifest(set.manifest_path, set.manifest);
    spdlog::info("mixed {} clips at {} dB into {}", m.size(), snr, dir.string());
    sets.push_back(std::move(set));
  }
  return sets;
}

ToyCorpus cmd_synth_toy(const ToyCorpusSpec& spec, const fs::path& out, std::size_t threads) {
  require(out, "--out");
  auto corpus = write_toy_corpus(spec, out, threads);
  spdlog::info("wrote {} toy clips to {}", corpus.manifest.size(), out.string());
  return corpus;
}

}  // namespace wsvad::cli
