#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include "dvr/clipstore.hpp"

namespace dvr {
namespace {

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  out.push_back(cur);
  return out;
}

double parse_double(const std::string& s, const std::string& what) {
  double v = 0.0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) {
    throw FormatError("catalog: bad " + what + " value '" + s + "'");
  }
  return v;
}

std::size_t parse_size(const std::string& s, const std::string& what) {
  std::size_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) {
    throw FormatError("catalog: bad " + what + " value '" + s + "'");
  }
  return v;
}

bool parse_bool(const std::string& s) {
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  throw FormatError("catalog: bad quality_pass value '" + s + "'");
}

std::string fmt_double(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

}  // namespace

std::string to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::test: return "test";
    case Split::unassigned: break;
  }
  return "unassigned";
}

Split parse_split(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "test") return Split::test;
  if (s == "unassigned" || s.empty()) return Split::unassigned;
  throw FormatError("catalog: bad split value '" + s + "'");
}

Catalog::Catalog(std::vector<ClipRecord> records) {
  records_.reserve(records.size());
  for (auto& r : records) add(std::move(r));
}

void Catalog::add(ClipRecord record) {
  if (record.clip_id.empty()) throw InvalidArgument("clip_id must be non-empty");
  if (find(record.clip_id) != nullptr) {
    throw InvalidArgument("duplicate clip_id '" + record.clip_id + "'");
  }
  records_.push_back(std::move(record));
}

const ClipRecord* Catalog::find(const std::string& clip_id) const {
  for (const auto& r : records_) {
    if (r.clip_id == clip_id) return &r;
  }
  return nullptr;
}

const ClipRecord& Catalog::at(const std::string& clip_id) const {
  const ClipRecord* r = find(clip_id);
  if (r == nullptr) throw InvalidArgument("unknown clip_id '" + clip_id + "'");
  return *r;
}

std::filesystem::path resolve_clip_path(const std::filesystem::path& catalog,
                                        const ClipRecord& record) {
  if (record.path.is_absolute()) return record.path;
  return catalog.parent_path() / record.path;
}

void save_catalog(const Catalog& catalog, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << kCatalogHeader << '\n';
  for (const auto& r : catalog) {
    if (r.clip_id.find(',') != std::string::npos ||
        r.subject_id.find(',') != std::string::npos ||
        r.path.string().find(',') != std::string::npos) {
      throw InvalidArgument("catalog fields must not contain commas");
    }
    out << r.clip_id << ',' << r.subject_id << ',' << r.path.generic_string()
        << ',' << fmt_double(r.fps) << ',' << r.n_frames << ','
        << fmt_double(r.duration_s) << ',' << fmt_double(r.hr_bpm) << ','
        << fmt_double(r.rr_brpm) << ',' << (r.quality_pass ? "true" : "false")
        << ',' << to_string(r.split) << '\n';
  }
  if (!out) throw IoError("write failed for " + path.string());
}

Catalog load_catalog(const std::filesystem::path& path, bool check_files) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open catalog " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw FormatError("catalog: missing header row");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kCatalogHeader) {
    throw FormatError("catalog: unexpected header '" + line + "'");
  }
  Catalog catalog;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    auto f = split_fields(line);
    if (f.size() != 10) {
      throw FormatError("catalog line " + std::to_string(lineno) + ": expected 10 fields, got " +
                        std::to_string(f.size()));
    }
    ClipRecord r;
    r.clip_id = f[0];
    r.subject_id = f[1];
    r.path = f[2];
    r.fps = parse_double(f[3], "fps");
    r.n_frames = parse_size(f[4], "n_frames");
    r.duration_s = parse_double(f[5], "duration_s");
    r.hr_bpm = parse_double(f[6], "hr_bpm");
    r.rr_brpm = parse_double(f[7], "rr_brpm");
    r.quality_pass = parse_bool(f[8]);
    r.split = parse_split(f[9]);
    if (check_files) {
      auto p = resolve_clip_path(path, r);
      std::ifstream probe(p, std::ios::binary);
      if (!probe) {
        throw IoError("catalog: clip file for '" + r.clip_id + "' is not readable: " +
                      p.string());
      }
    }
    try {
      catalog.add(std::move(r));
    } catch (const InvalidArgument& e) {
      throw FormatError(std::string("catalog: ") + e.what());
    }
  }
  return catalog;
}

}  // namespace dvr
