#include "symspot/dataset.hpp"

#include <cmath>
#include <exception>
#include <fstream>
#include <map>
#include <sstream>
#include <thread>

#include "symspot/errors.hpp"
#include "symspot/json.hpp"

namespace symspot {
namespace {

constexpr const char* kRecordFormat = "symspot-drawing";
constexpr const char* kManifestFormat = "symspot-manifest";

void check_header(const Json& j, const char* format, int version, const std::string& source) {
  if (!j.is_object()) throw ParseError(source + ": top level must be an object");
  const auto f = j.find("format");
  if (f == j.end() || !f->is_string() || f->get<std::string>() != format)
    throw ParseError(source + ": format: expected \"" + std::string(format) + "\"");
  const auto v = j.find("version");
  if (v == j.end() || !v->is_number_integer()) throw ParseError(source + ": version: missing");
  if (v->get<int>() != version)
    throw VersionMismatch(source + ": version " + std::to_string(v->get<int>()) + " is not supported (expected " +
                          std::to_string(version) + ")");
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_text(const std::string& text, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace

std::vector<std::size_t> DrawingRecord::out_of_extent() const {
  std::vector<std::size_t> out;
  const auto inside = [&](Vec2 p) {
    return p.x >= 0 && p.y >= 0 && p.x <= block_extent.x && p.y <= block_extent.y;
  };
  for (std::size_t i = 0; i < primitives.size(); ++i) {
    const ApproxSegment s = approximate_segment(primitives[i]);
    if (!inside(s.p) || !inside(s.q)) out.push_back(i);
  }
  return out;
}

std::string serialize_record(const DrawingRecord& record) {
  Json j;
  j["format"] = kRecordFormat;
  j["version"] = kRecordVersion;
  j["id"] = record.id;
  j["block_extent"] = Json::array({record.block_extent.x, record.block_extent.y});
  Json prims = Json::array();
  for (const auto& p : record.primitives) prims.push_back(to_json(p));
  j["primitives"] = std::move(prims);
  return j.dump(1) + "\n";
}

DrawingRecord parse_record(const std::string& text, const ClassTable* classes, const std::string& source) {
  const Json j = parse_json_text(text, source);
  check_header(j, kRecordFormat, kRecordVersion, source);
  DrawingRecord r;
  const auto id = j.find("id");
  if (id == j.end() || !id->is_string()) throw ParseError(source + ": id: expected a string");
  r.id = id->get<std::string>();
  if (const auto ext = j.find("block_extent"); ext != j.end()) {
    if (!ext->is_array() || ext->size() != 2 || !(*ext)[0].is_number() || !(*ext)[1].is_number())
      throw ParseError(source + ": block_extent: expected [width, height]");
    r.block_extent = {(*ext)[0].get<double>(), (*ext)[1].get<double>()};
  }
  const auto prims = j.find("primitives");
  if (prims == j.end() || !prims->is_array()) throw ParseError(source + ": primitives: expected an array");
  r.primitives.reserve(prims->size());
  for (std::size_t i = 0; i < prims->size(); ++i) {
    const std::string where = source + ": primitives[" + std::to_string(i) + "]";
    Primitive p = primitive_from_json((*prims)[i], where);
    if (classes) {
      if (!classes->contains(p.label))
        throw ParseError(where + ".label: class " + std::to_string(p.label) + " is not in the class table");
      if (classes->is_thing(p.label) && p.instance < 0)
        throw ParseError(where + ".instance: missing on a thing primitive");
    }
    r.primitives.push_back(std::move(p));
  }
  return r;
}

DrawingRecord load_record(const std::filesystem::path& path, const ClassTable* classes) {
  return parse_record(read_text(path), classes, path.string());
}

void save_record(const DrawingRecord& record, const std::filesystem::path& path) {
  write_text(serialize_record(record), path);
}

DatasetManifest load_manifest(const std::filesystem::path& path) {
  const Json j = read_json_file(path);
  const std::string source = path.string();
  check_header(j, kManifestFormat, kManifestVersion, source);
  DatasetManifest m;
  const auto split = j.find("split");
  if (split == j.end() || !split->is_string()) throw ParseError(source + ": split: expected a string");
  m.split = split->get<std::string>();
  const auto records = j.find("records");
  if (records == j.end() || !records->is_array()) throw ParseError(source + ": records: expected an array");
  for (std::size_t i = 0; i < records->size(); ++i) {
    if (!(*records)[i].is_string())
      throw ParseError(source + ": records[" + std::to_string(i) + "]: expected a path string");
    m.records.push_back((*records)[i].get<std::string>());
  }
  const auto classes = j.find("classes");
  if (classes == j.end()) throw ParseError(source + ": classes: missing");
  m.classes = class_table_from_json(*classes, source + ": classes");
  return m;
}

void save_manifest(const DatasetManifest& m, const std::filesystem::path& path) {
  Json j;
  j["format"] = kManifestFormat;
  j["version"] = kManifestVersion;
  j["split"] = m.split;
  j["records"] = m.records;
  j["classes"] = to_json(m.classes);
  write_json_file(j, path);
}

std::vector<DrawingRecord> load_dataset(const std::filesystem::path& manifest_path,
                                        const DatasetManifest& manifest, int jobs) {
  const auto base = manifest_path.parent_path();
  std::vector<DrawingRecord> out(manifest.records.size());
  const std::size_t workers = std::min<std::size_t>(std::max(jobs, 1), std::max<std::size_t>(out.size(), 1));
  std::vector<std::exception_ptr> errors(workers);
  const auto work = [&](std::size_t w) {
    try {
      for (std::size_t i = w; i < out.size(); i += workers)
        out[i] = load_record(base / manifest.records[i], &manifest.classes);
    } catch (...) {
      errors[w] = std::current_exception();
    }
  };
  if (workers == 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work, w);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

namespace {

Primitive translated(const Primitive& p, Vec2 offset) {
  Primitive out = p;
  std::visit(
      [&](auto& s) {
        using S = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<S, SegmentShape>) {
          s.start = s.start - offset;
          s.end = s.end - offset;
        } else {
          s.center = s.center - offset;
        }
      },
      out.shape);
  return out;
}

}  // namespace

std::vector<DrawingRecord> tile_record(const DrawingRecord& record, double block_mm) {
  if (!(block_mm > 0)) throw ConfigError("tile size must be positive");
  std::map<std::pair<long, long>, DrawingRecord> tiles;
  for (const auto& p : record.primitives) {
    const Vec2 mid = approximate_segment(p).midpoint();
    const std::pair<long, long> key{static_cast<long>(std::floor(mid.x / block_mm)),
                                    static_cast<long>(std::floor(mid.y / block_mm))};
    auto [it, inserted] = tiles.try_emplace(key);
    if (inserted) {
      it->second.id = record.id + "@" + std::to_string(key.first) + "_" + std::to_string(key.second);
      it->second.block_extent = {block_mm, block_mm};
    }
    const Vec2 origin{static_cast<double>(key.first) * block_mm, static_cast<double>(key.second) * block_mm};
    it->second.primitives.push_back(translated(p, origin));
  }
  std::vector<DrawingRecord> out;
  out.reserve(tiles.size());
  for (auto& [key, rec] : tiles) out.push_back(std::move(rec));
  return out;
}

}  // namespace symspot
