#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace wsvad::cli {

struct ManifestRow {
  std::string clip_id;
  std::filesystem::path audio_path;
  std::vector<std::string> clip_labels;
  std::optional<std::filesystem::path> frame_labels;
};

/// A list of clips with their clip-level labels.
///
/// Two on-disk forms are accepted, chosen by extension: ".jsonl" holds one
/// JSON object per line with keys clip_id, audio_path, clip_labels (array
/// or semicolon-joined string) and optional frame_labels; anything else is
/// a TSV with the header "clip_id audio_path clip_labels [frame_labels]".
/// Relative paths are resolved against the manifest's directory.
struct Manifest {
  std::vector<ManifestRow> rows;

  std::size_t size() const noexcept { return rows.size(); }
  bool empty() const noexcept { return rows.empty(); }
  std::vector<std::string> ids() const;
  /// Sorted distinct clip labels.
  std::vector<std::string> label_vocabulary() const;

  /// Throws InvalidInput on duplicate or empty ids, or (when check_paths)
  /// on audio / frame-label files that do not exist.
  void validate(bool check_paths = true) const;
};

/// Throws InvalidInput when the file is missing, FormatError when a row is
/// malformed. The result is validated with paths checked.
Manifest read_manifest(const std::filesystem::path& path);

/// Writes paths relative to the manifest directory when they lie beneath
/// it, absolute otherwise.
void write_manifest(const std::filesystem::path& path, const Manifest& m);

std::vector<std::string> split_labels(const std::string& joined);
std::string join_labels(const std::vector<std::string>& labels);

}  // namespace wsvad::cli
