#pragma once

// Drawing records, dataset manifests and block tiling.

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "symspot/classes.hpp"
#include "symspot/geometry.hpp"

namespace symspot {

inline constexpr int kRecordVersion = 1;
inline constexpr int kManifestVersion = 1;
inline constexpr double kDefaultBlockExtent = 10000.0;  // mm

struct DrawingRecord {
  std::string id;
  std::vector<Primitive> primitives;
  Vec2 block_extent{kDefaultBlockExtent, kDefaultBlockExtent};

  /// Indices of primitives whose approximating segment leaves
  /// [0, extent]. Such primitives are kept.
  std::vector<std::size_t> out_of_extent() const;
  friend bool operator==(const DrawingRecord&, const DrawingRecord&) = default;
};

/// Throws ParseError (naming the offending field) or VersionMismatch. When
/// `classes` is given, labels must be in the table and thing primitives
/// must carry an instance id.
DrawingRecord load_record(const std::filesystem::path& path, const ClassTable* classes = nullptr);
DrawingRecord parse_record(const std::string& text, const ClassTable* classes = nullptr,
                           const std::string& source = "<memory>");
void save_record(const DrawingRecord& record, const std::filesystem::path& path);
std::string serialize_record(const DrawingRecord& record);

struct DatasetManifest {
  std::string split;
  std::vector<std::string> records;  // paths relative to the manifest file
  ClassTable classes;
  friend bool operator==(const DatasetManifest&, const DatasetManifest&) = default;
};

DatasetManifest load_manifest(const std::filesystem::path& path);
void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);

/// Loads every record of a manifest, `jobs` files at a time. Output order
/// follows the manifest.
std::vector<DrawingRecord> load_dataset(const std::filesystem::path& manifest_path,
                                        const DatasetManifest& manifest, int jobs = 1);

/// Splits a drawing into square blocks by approximating-segment midpoint.
/// Each tile is translated so its block starts at the origin; empty tiles
/// are dropped. Tile ids are "<id>@<col>_<row>".
std::vector<DrawingRecord> tile_record(const DrawingRecord& record,
                                       double block_mm = kDefaultBlockExtent);

/// Adapter from a foreign annotation convention into native records.
class RecordConverter {
 public:
  virtual ~RecordConverter() = default;
  virtual DrawingRecord convert(const DrawingRecord& in) const = 0;
};

/// Passes records through unchanged.
class IdentityConverter final : public RecordConverter {
 public:
  DrawingRecord convert(const DrawingRecord& in) const override { return in; }
};

}  // namespace symspot
