#pragma once

// Anomaly feature vectors, their named layout, and the delimited text table
// used to move them between pipeline stages.
//
// Table format (comma separated, '\n' line endings):
//   label,success,split,<feature name>...
//   <int>,<0|1>,<train|test|none>,<value>...
// Values are written in shortest round-trip form, so write/read is exact.

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace afv {

struct FeatureInfo {
  std::string group;
  std::string name;
  bool operator==(const FeatureInfo&) const = default;
};

class FeatureLayout {
 public:
  FeatureLayout() = default;
  explicit FeatureLayout(std::vector<FeatureInfo> features);

  void append(std::string group, std::string name);
  std::size_t size() const { return features_.size(); }
  const FeatureInfo& operator[](std::size_t i) const { return features_[i]; }
  const std::vector<FeatureInfo>& features() const { return features_; }
  std::optional<std::size_t> index_of(const std::string& name) const;
  // Indices belonging to one group, in layout order.
  std::vector<std::size_t> group_indices(const std::string& group) const;
  bool operator==(const FeatureLayout& o) const { return features_ == o.features_; }

 private:
  std::vector<FeatureInfo> features_;
  std::map<std::string, std::size_t> by_name_;
};

struct Afv {
  std::vector<double> values;
  std::shared_ptr<const FeatureLayout> layout;
  int label = 0;
  bool attack_success = true;
};

enum class Split { None, Train, Test };

const char* split_name(Split s);
Split parse_split(const std::string& s);

struct AfvTable {
  std::shared_ptr<const FeatureLayout> layout;
  std::vector<Afv> rows;
  std::vector<Split> split;  // parallel to rows
  std::map<int, std::string> class_names;

  std::size_t size() const { return rows.size(); }
  std::size_t dim() const { return layout ? layout->size() : 0; }
  std::vector<std::size_t> indices(Split s) const;
  // Copy holding only the rows tagged s.
  AfvTable subset(Split s) const;
  int num_classes() const;  // max label + 1
  void validate() const;
};

std::string render_afv_table(const AfvTable& table);
AfvTable parse_afv_table(const std::string& text);
void write_afv_table(const AfvTable& table, const std::filesystem::path& path);
AfvTable read_afv_table(const std::filesystem::path& path);

}  // namespace afv
