#include "wsvad/cli/config.hpp"

#include "wsvad/common/binary_io.hpp"
#include "wsvad/common/error.hpp"

namespace wsvad::cli {

namespace {

void reject_unknown(const nlohmann::json& j, const nlohmann::json& known, const std::string& what) {
  if (!j.is_object()) throw InvalidInput(what + ": expected an object");
  for (const auto& [key, _] : j.items()) {
    if (!known.contains(key)) throw InvalidInput(what + ": unknown key '" + key + "'");
  }
}

}  // namespace

nlohmann::json dsp_to_json(const dsp::DspConfig& c) {
  return {{"target_sr", c.target_sr}, {"n_fft", c.n_fft},   {"win_s", c.win_s},
          {"hop_s", c.hop_s},         {"n_mels", c.n_mels}, {"log_floor", c.log_floor}};
}

dsp::DspConfig dsp_from_json(const nlohmann::json& j) {
  dsp::DspConfig c;
  reject_unknown(j, dsp_to_json(c), "dsp config");
  try {
    c.target_sr = j.value("target_sr", c.target_sr);
    c.n_fft = j.value("n_fft", c.n_fft);
    c.win_s = j.value("win_s", c.win_s);
    c.hop_s = j.value("hop_s", c.hop_s);
    c.n_mels = j.value("n_mels", c.n_mels);
    c.log_floor = j.value("log_floor", c.log_floor);
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput(std::string("dsp config: ") + e.what());
  }
  c.validate();
  return c;
}

void PipelineConfig::validate() const {
  dsp.validate();
  teacher_model.validate();
  student_model.validate();
  if (student_model.num_outputs != 2) {
    throw InvalidInput("student_model must have exactly 2 outputs (speech, non-speech)");
  }
  for (const auto* m : {&teacher_model, &student_model}) {
    if (m->n_mels != static_cast<std::size_t>(dsp.n_mels)) {
      throw InvalidInput("model n_mels does not match dsp.n_mels");
    }
  }
  teacher_train.validate();
  student_train.validate();
  distill.validate();
  threshold.validate();
  if (speech_label.empty()) throw InvalidInput("speech_label is empty");
}

nlohmann::json PipelineConfig::to_json() const {
  return {{"dsp", dsp_to_json(dsp)},
          {"teacher_model", teacher_model.to_json()},
          {"student_model", student_model.to_json()},
          {"teacher_train", teacher_train.to_json()},
          {"student_train", student_train.to_json()},
          {"distill",
           {{"phi", distill.phi}, {"dynamic_fraction", distill.dynamic_fraction}}},
          {"threshold", threshold.to_json()},
          {"speech_label", speech_label}};
}

PipelineConfig PipelineConfig::from_json(const nlohmann::json& j) {
  PipelineConfig c;
  reject_unknown(j, c.to_json(), "config");
  const auto overlay = [](const nlohmann::json& base, const nlohmann::json& over) {
    auto merged = base;
    merged.merge_patch(over);
    return merged;
  };
  if (j.contains("dsp")) c.dsp = dsp_from_json(overlay(dsp_to_json(c.dsp), j["dsp"]));
  if (j.contains("teacher_model")) {
    c.teacher_model = nn::CrnnConfig::from_json(overlay(c.teacher_model.to_json(), j["teacher_model"]));
  }
  if (j.contains("student_model")) {
    c.student_model = nn::CrnnConfig::from_json(overlay(c.student_model.to_json(), j["student_model"]));
  }
  if (j.contains("teacher_train")) c.teacher_train = train::TrainConfig::from_json(j["teacher_train"]);
  if (j.contains("student_train")) c.student_train = train::TrainConfig::from_json(j["student_train"]);
  if (j.contains("distill")) {
    const auto& d = j["distill"];
    reject_unknown(d, c.to_json()["distill"], "distill config");
    try {
      c.distill.phi = d.value("phi", c.distill.phi);
      c.distill.dynamic_fraction = d.value("dynamic_fraction", c.distill.dynamic_fraction);
    } catch (const nlohmann::json::exception& e) {
      throw InvalidInput(std::string("distill config: ") + e.what());
    }
  }
  if (j.contains("threshold")) c.threshold = eval::ThresholdConfig::from_json(j["threshold"]);
  if (j.contains("speech_label")) {
    if (!j["speech_label"].is_string()) throw InvalidInput("config: speech_label must be a string");
    c.speech_label = j["speech_label"].get<std::string>();
  }
  if (j.contains("dsp") && j["dsp"].contains("n_mels")) {
    const auto n = static_cast<std::size_t>(c.dsp.n_mels);
    if (!(j.contains("teacher_model") && j["teacher_model"].contains("n_mels"))) c.teacher_model.n_mels = n;
    if (!(j.contains("student_model") && j["student_model"].contains("n_mels"))) c.student_model.n_mels = n;
  }
  c.validate();
  return c;
}

PipelineConfig load_config(const std::filesystem::path& path) {
  if (path.empty()) return {};
  if (!std::filesystem::is_regular_file(path)) {
    throw InvalidInput("config not found: " + path.string());
  }
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(io::read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput("config " + path.string() + ": " + e.what());
  }
  return PipelineConfig::from_json(j);
}

}  // namespace wsvad::cli
