#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace symspot {

enum class ClassKind { Background, Thing, Stuff };

std::string_view to_string(ClassKind kind);
ClassKind class_kind_from_string(std::string_view s);

struct ClassInfo {
  int id = 0;
  std::string name;
  ClassKind kind = ClassKind::Thing;
  friend bool operator==(const ClassInfo&, const ClassInfo&) = default;
};

/// Class ids are dense from 0 and exactly one class is background.
class ClassTable {
 public:
  ClassTable() = default;
  explicit ClassTable(std::vector<ClassInfo> classes);

  /// 30 things, 5 stuff classes and background.
  static ClassTable floorplan();
  /// background, wall (stuff), door, window, table, then generated fixture
  /// classes up to `count` entries (4 <= count <= 36).
  static ClassTable synthetic(int count);

  int size() const { return static_cast<int>(classes_.size()); }
  const ClassInfo& operator[](int id) const { return classes_.at(static_cast<std::size_t>(id)); }
  const std::vector<ClassInfo>& all() const { return classes_; }
  bool contains(int id) const { return id >= 0 && id < size(); }
  bool is_thing(int id) const { return contains(id) && classes_[id].kind == ClassKind::Thing; }
  bool is_stuff(int id) const { return contains(id) && classes_[id].kind == ClassKind::Stuff; }
  int background() const { return background_; }
  /// Id with the given name, or -1.
  int find(std::string_view name) const;

  friend bool operator==(const ClassTable&, const ClassTable&) = default;

 private:
  std::vector<ClassInfo> classes_;
  int background_ = 0;
};

}  // namespace symspot
