#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "wsvad/eval/postprocess.hpp"

namespace wsvad::eval {

inline const std::string kSpeechLabel = "Speech";

/// Segment label file: TSV with header "clip_id onset offset label" and one
/// row per segment. A clip without segments is listed as a row holding only
/// its id, so every scored clip appears in the file.
void write_segments(const std::filesystem::path& path, const std::vector<SegmentList>& clips,
                    const std::string& label = kSpeechLabel);

/// Reads a segment file, keeping rows whose label equals `label` (all rows
/// when `label` is empty). Throws FormatError on malformed rows and
/// InvalidInput on invalid segment lists.
std::map<std::string, std::vector<Segment>> read_segments(const std::filesystem::path& path,
                                                          const std::string& label = kSpeechLabel);

}  // namespace wsvad::eval
