#include "wsvad/cli/manifest.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "wsvad/common/binary_io.hpp"
#include "wsvad/common/error.hpp"

namespace wsvad::cli {

namespace fs = std::filesystem;

namespace {

bool is_jsonl(const fs::path& p) { return p.extension() == ".jsonl"; }

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const auto tab = line.find('\t', start);
    out.push_back(line.substr(start, tab - start));
    if (tab == std::string::npos) return out;
    start = tab + 1;
  }
}

fs::path resolve(const fs::path& base, const std::string& p) {
  fs::path path(p);
  return path.is_relative() ? (base / path).lexically_normal() : path;
}

std::string relative_to(const fs::path& base, const fs::path& p) {
  const auto abs_base = fs::absolute(base).lexically_normal();
  const auto abs_p = fs::absolute(p).lexically_normal();
  const auto rel = abs_p.lexically_relative(abs_base);
  if (!rel.empty() && *rel.begin() != "..") return rel.generic_string();
  return abs_p.generic_string();
}

void strip_cr(std::string& line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
}

ManifestRow parse_tsv_row(const std::vector<std::string>& cols, const fs::path& base,
                          std::size_t line_no, bool has_frame_col) {
  if (cols.size() < 3 || cols.size() > (has_frame_col ? 4u : 3u)) {
    throw FormatError("manifest line " + std::to_string(line_no) + ": expected " +
                      (has_frame_col ? "3 or 4" : "3") + " columns, got " +
                      std::to_string(cols.size()));
  }
  ManifestRow row{cols[0], resolve(base, cols[1]), split_labels(cols[2]), std::nullopt};
  if (cols.size() == 4 && !cols[3].empty()) row.frame_labels = resolve(base, cols[3]);
  return row;
}

ManifestRow parse_json_row(const std::string& line, const fs::path& base, std::size_t line_no) {
  const auto where = "manifest line " + std::to_string(line_no) + ": ";
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(where + e.what());
  }
  if (!j.is_object()) throw FormatError(where + "expected an object");
  try {
    ManifestRow row;
    row.clip_id = j.at("clip_id").get<std::string>();
    row.audio_path = resolve(base, j.at("audio_path").get<std::string>());
    if (j.contains("clip_labels")) {
      const auto& l = j.at("clip_labels");
      row.clip_labels = l.is_string() ? split_labels(l.get<std::string>())
                                      : l.get<std::vector<std::string>>();
    }
    if (j.contains("frame_labels") && !j.at("frame_labels").is_null()) {
      row.frame_labels = resolve(base, j.at("frame_labels").get<std::string>());
    }
    for (const auto& [key, _] : j.items()) {
      if (key != "clip_id" && key != "audio_path" && key != "clip_labels" &&
          key != "frame_labels") {
        throw FormatError(where + "unknown key '" + key + "'");
      }
    }
    return row;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(where + e.what());
  }
}

}  // namespace

std::vector<std::string> split_labels(const std::string& joined) {
  std::vector<std::string> out;
  std::stringstream ss(joined);
  std::string item;
  while (std::getline(ss, item, ';')) {
    if (!item.empty()) out.push_back(item);
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

std::string join_labels(const std::vector<std::string>& labels) {
  std::string out;
  for (const auto& l : labels) {
    if (!out.empty()) out += ';';
    out += l;
  }
  return out;
}

std::vector<std::string> Manifest::ids() const {
  std::vector<std::string> out;
  out.reserve(rows.size());
  for (const auto& r : rows) out.push_back(r.clip_id);
  return out;
}

std::vector<std::string> Manifest::label_vocabulary() const {
  std::set<std::string> labels;
  for (const auto& r : rows) labels.insert(r.clip_labels.begin(), r.clip_labels.end());
  return {labels.begin(), labels.end()};
}

void Manifest::validate(bool check_paths) const {
  std::set<std::string> seen;
  for (const auto& r : rows) {
    if (r.clip_id.empty()) throw InvalidInput("manifest: empty clip id");
    if (r.clip_id.find_first_of("\t\n") != std::string::npos) {
      throw InvalidInput("manifest: clip id '" + r.clip_id + "' contains a tab or newline");
    }
    if (!seen.insert(r.clip_id).second) {
      throw InvalidInput("manifest: duplicate clip id '" + r.clip_id + "'");
    }
    if (!check_paths) continue;
    if (!fs::is_regular_file(r.audio_path)) {
      throw InvalidInput("manifest: audio for '" + r.clip_id + "' not found: " +
                         r.audio_path.string());
    }
    if (r.frame_labels && !fs::is_regular_file(*r.frame_labels)) {
      throw InvalidInput("manifest: frame labels for '" + r.clip_id + "' not found: " +
                         r.frame_labels->string());
    }
  }
}

Manifest read_manifest(const fs::path& path) {
  if (!fs::is_regular_file(path)) {
    throw InvalidInput("manifest not found: " + path.string());
  }
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open manifest: " + path.string());
  const auto base = path.parent_path();
  Manifest m;
  std::string line;
  std::size_t line_no = 0;
  if (is_jsonl(path)) {
    while (std::getline(in, line)) {
      ++line_no;
      strip_cr(line);
      if (line.find_first_not_of(" \t") == std::string::npos) continue;
      m.rows.push_back(parse_json_row(line, base, line_no));
    }
  } else {
    if (!std::getline(in, line)) throw FormatError("manifest is empty: " + path.string());
    ++line_no;
    strip_cr(line);
    const auto header = split_tabs(line);
    const std::vector<std::string> base_cols{"clip_id", "audio_path", "clip_labels"};
    const bool has_frame_col = header.size() == 4 && header[3] == "frame_labels";
    if (header.size() < 3 || !std::equal(base_cols.begin(), base_cols.end(), header.begin()) ||
        (header.size() == 4 && !has_frame_col) || header.size() > 4) {
      throw FormatError("manifest header must be clip_id, audio_path, clip_labels"
                        "[, frame_labels]: " + path.string());
    }
    while (std::getline(in, line)) {
      ++line_no;
      strip_cr(line);
      if (line.empty()) continue;
      m.rows.push_back(parse_tsv_row(split_tabs(line), base, line_no, has_frame_col));
    }
  }
  m.validate(true);
  return m;
}

void write_manifest(const fs::path& path, const Manifest& m) {
  m.validate(false);
  const auto base = path.parent_path().empty() ? fs::path(".") : path.parent_path();
  std::string out;
  if (is_jsonl(path)) {
    for (const auto& r : m.rows) {
      nlohmann::json j{{"clip_id", r.clip_id},
                       {"audio_path", relative_to(base, r.audio_path)},
                       {"clip_labels", r.clip_labels}};
      if (r.frame_labels) j["frame_labels"] = relative_to(base, *r.frame_labels);
      out += j.dump() + "\n";
    }
  } else {
    const bool frames = std::any_of(m.rows.begin(), m.rows.end(),
                                    [](const auto& r) { return r.frame_labels.has_value(); });
    out = frames ? "clip_id\taudio_path\tclip_labels\tframe_labels\n"
                 : "clip_id\taudio_path\tclip_labels\n";
    for (const auto& r : m.rows) {
      out += r.clip_id + '\t' + relative_to(base, r.audio_path) + '\t' +
             join_labels(r.clip_labels);
      if (frames) out += '\t' + (r.frame_labels ? relative_to(base, *r.frame_labels) : "");
      out += '\n';
    }
  }
  io::write_file_atomic(path, out);
}

}  // namespace wsvad::cli
