#include "wsvad/distill/archive.hpp"

#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "wsvad/common/binary_io.hpp"
#include "wsvad/common/error.hpp"

namespace wsvad::distill {

namespace {

constexpr char kMagic[4] = {'L', 'B', 'L', '0'};

void write_record(std::ostream& out, const FrameRecord& r) {
  if (r.clip_id.size() > std::numeric_limits<std::uint16_t>::max()) {
    throw InvalidInput("clip id too long: " + r.clip_id.substr(0, 40) + "...");
  }
  if (r.kind.size() > std::numeric_limits<std::uint8_t>::max()) {
    throw InvalidInput("record kind too long");
  }
  io::write_u16(out, static_cast<std::uint16_t>(r.clip_id.size()));
  io::write_bytes(out, r.clip_id);
  io::write_u8(out, static_cast<std::uint8_t>(r.kind.size()));
  io::write_bytes(out, r.kind);
  io::write_u32(out, static_cast<std::uint32_t>(r.values.rows()));
  io::write_u32(out, static_cast<std::uint32_t>(r.values.cols()));
  io::write_f32s(out, r.values.values());
}

FrameRecord read_record(std::istream& in) {
  FrameRecord r;
  r.clip_id = io::read_bytes(in, io::read_u16(in));
  r.kind = io::read_bytes(in, io::read_u8(in));
  const std::size_t rows = io::read_u32(in);
  const std::size_t cols = io::read_u32(in);
  r.values = Matrix<float>(rows, cols);
  io::read_f32s(in, r.values.values());
  return r;
}

}  // namespace

std::filesystem::path archive_index_path(const std::filesystem::path& archive) {
  return archive.string() + ".index.tsv";
}

void write_archive(const std::filesystem::path& path, const std::vector<FrameRecord>& records) {
  std::ostringstream data, index;
  data.write(kMagic, 4);
  io::write_u32(data, kArchiveFormat);
  index << "clip_id\toffset\tframes\tkind\n";
  std::set<std::string> seen;
  for (const auto& r : records) {
    if (r.clip_id.empty() || r.clip_id.find_first_of("\t\n") != std::string::npos) {
      throw InvalidInput("clip id '" + r.clip_id + "' cannot be indexed");
    }
    if (!seen.insert(r.clip_id).second) throw InvalidInput("duplicate clip id " + r.clip_id);
    index << r.clip_id << '\t' << static_cast<std::uint64_t>(data.tellp()) << '\t'
          << r.values.rows() << '\t' << r.kind << '\n';
    write_record(data, r);
  }
  io::write_file_atomic(path, data.str());
  io::write_file_atomic(archive_index_path(path), index.str());
}

LabelArchive::LabelArchive(const std::filesystem::path& path) : path_(path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInput("cannot open label archive " + path.string());
  char magic[4] = {};
  in.read(magic, 4);
  if (!in || !std::equal(magic, magic + 4, kMagic)) {
    throw FormatError(path.string() + " is not a label archive");
  }
  if (io::read_u32(in) != kArchiveFormat) {
    throw FormatError(path.string() + ": unsupported label archive format");
  }
  const auto size = std::filesystem::file_size(path);

  std::ifstream idx(archive_index_path(path));
  if (!idx) throw InvalidInput("missing label archive index " + archive_index_path(path).string());
  std::string line;
  if (!std::getline(idx, line) || line != "clip_id\toffset\tframes\tkind") {
    throw FormatError("bad label archive index header");
  }
  while (std::getline(idx, line)) {
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::string id, kind;
    std::uint64_t offset = 0, frames = 0;
    if (!std::getline(fields, id, '\t') || !(fields >> offset >> frames >> kind)) {
      throw FormatError("malformed index line: " + line);
    }
    if (offset >= size) throw FormatError("index offset past the end of the archive for " + id);
    if (!offsets_.emplace(id, offset).second) throw FormatError("duplicate index entry " + id);
    ids_.push_back(id);
  }
}

FrameRecord LabelArchive::read(const std::string& id) const {
  auto it = offsets_.find(id);
  if (it == offsets_.end()) throw InvalidInput("clip " + id + " is not in " + path_.string());
  std::ifstream in(path_, std::ios::binary);
  in.seekg(static_cast<std::streamoff>(it->second));
  FrameRecord r = read_record(in);
  if (r.clip_id != id) {
    throw FormatError("index points " + id + " at the record of " + r.clip_id);
  }
  return r;
}

std::vector<FrameRecord> LabelArchive::read_all() const {
  std::vector<FrameRecord> out;
  out.reserve(ids_.size());
  for (const auto& id : ids_) out.push_back(read(id));
  return out;
}

FrameRecord to_record(const StudentTargets& t) {
  return {t.clip_id, to_string(t.scheme), t.values};
}

StudentTargets to_targets(const FrameRecord& r) {
  if (r.values.cols() != 2) {
    throw FormatError("record " + r.clip_id + " has " + std::to_string(r.values.cols()) +
                      " columns, student targets have 2");
  }
  StudentTargets t;
  try {
    t.scheme = label_scheme_from_string(r.kind);
  } catch (const InvalidInput& e) {
    throw FormatError("record " + r.clip_id + ": " + e.what());
  }
  t.clip_id = r.clip_id;
  t.values = r.values;
  return t;
}

void write_targets(const std::filesystem::path& path, const std::vector<StudentTargets>& targets) {
  std::vector<FrameRecord> records;
  records.reserve(targets.size());
  for (const auto& t : targets) records.push_back(to_record(t));
  write_archive(path, records);
}

std::vector<StudentTargets> read_targets(const std::filesystem::path& path) {
  std::vector<StudentTargets> out;
  for (const auto& r : LabelArchive(path).read_all()) out.push_back(to_targets(r));
  return out;
}

}  // namespace wsvad::distill
