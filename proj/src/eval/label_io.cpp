#include "wsvad/eval/label_io.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "wsvad/common/binary_io.hpp"
#include "wsvad/common/error.hpp"

namespace wsvad::eval {

namespace {

constexpr const char* kHeader = "clip_id\tonset\toffset\tlabel";

std::string format_time(double t) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, t);
  return std::string(buf, end);
}

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const auto tab = line.find('\t', start);
    out.push_back(line.substr(start, tab - start));
    if (tab == std::string::npos) break;
    start = tab + 1;
  }
  return out;
}

double parse_time(const std::string& s, std::size_t line_no) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw FormatError("line " + std::to_string(line_no) + ": bad time '" + s + "'");
  }
  return v;
}

}  // namespace

void write_segments(const std::filesystem::path& path, const std::vector<SegmentList>& clips,
                    const std::string& label) {
  std::ostringstream out;
  out << kHeader << '\n';
  for (const auto& c : clips) {
    if (c.clip_id.empty() || c.clip_id.find_first_of("\t\n") != std::string::npos) {
      throw InvalidInput("clip id '" + c.clip_id + "' cannot be written to a TSV");
    }
    if (c.segments.empty()) {
      out << c.clip_id << '\n';
      continue;
    }
    for (const auto& s : c.segments) {
      out << c.clip_id << '\t' << format_time(s.onset) << '\t' << format_time(s.offset) << '\t'
          << label << '\n';
    }
  }
  io::write_file_atomic(path, out.str());
}

std::map<std::string, std::vector<Segment>> read_segments(const std::filesystem::path& path,
                                                          const std::string& label) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open label file " + path.string());
  std::map<std::string, std::vector<Segment>> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line_no == 1 && line == kHeader) continue;
    const auto f = split_tabs(line);
    if (f[0].empty()) throw FormatError("line " + std::to_string(line_no) + ": empty clip id");
    auto& segs = out[f[0]];
    if (f.size() == 1) continue;
    if (f.size() != 4) {
      throw FormatError("line " + std::to_string(line_no) + ": expected 4 tab-separated fields");
    }
    if (!label.empty() && f[3] != label) continue;
    segs.push_back({parse_time(f[1], line_no), parse_time(f[2], line_no)});
  }
  for (auto& [id, segs] : out) {
    std::sort(segs.begin(), segs.end(),
              [](const Segment& a, const Segment& b) { return a.onset < b.onset; });
    try {
      validate_segments(segs);
    } catch (const InvalidInput& e) {
      throw InvalidInput("clip " + id + ": " + e.what());
    }
  }
  return out;
}

}  // namespace wsvad::eval
