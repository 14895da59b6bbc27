#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <unordered_map>
#include <vector>

#include "wsvad/common/matrix.hpp"
#include "wsvad/distill/labels.hpp"

namespace wsvad::distill {

/// One named per-frame matrix in a label archive.
struct FrameRecord {
  std::string clip_id;
  std::string kind;  // "soft", "hard", "dynamic" or "probs"
  Matrix<float> values;
};

// Archive layout: "LBL0" | u32 format, then per record
//   u16 id length | id | u8 kind length | kind | u32 T | u32 C | T*C f32
// little-endian. The index is a TSV next to it ("<archive>.index.tsv") with
// header "clip_id offset frames kind" mapping each clip to its record.
inline constexpr std::uint32_t kArchiveFormat = 1;

std::filesystem::path archive_index_path(const std::filesystem::path& archive);

/// Writes archive and index atomically. Clip ids must be unique.
void write_archive(const std::filesystem::path& path, const std::vector<FrameRecord>& records);

/// Random access to an archive through its index.
class LabelArchive {
 public:
  /// Throws FormatError if the archive or index is malformed or they disagree.
  explicit LabelArchive(const std::filesystem::path& path);

  const std::vector<std::string>& ids() const noexcept { return ids_; }
  std::size_t size() const noexcept { return ids_.size(); }
  bool contains(const std::string& id) const { return offsets_.count(id) > 0; }
  /// Throws InvalidInput for an unknown id.
  FrameRecord read(const std::string& id) const;
  std::vector<FrameRecord> read_all() const;

 private:
  std::filesystem::path path_;
  std::vector<std::string> ids_;
  std::unordered_map<std::string, std::uint64_t> offsets_;
};

FrameRecord to_record(const StudentTargets& t);
/// Throws FormatError unless the record holds a T x 2 target of a known scheme.
StudentTargets to_targets(const FrameRecord& r);

void write_targets(const std::filesystem::path& path, const std::vector<StudentTargets>& targets);
std::vector<StudentTargets> read_targets(const std::filesystem::path& path);

}  // namespace wsvad::distill
