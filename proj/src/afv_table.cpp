#include "afv/afv_table.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "afv/error.hpp"
#include "afv/text_format.hpp"

namespace afv {

FeatureLayout::FeatureLayout(std::vector<FeatureInfo> features) {
  for (auto& f : features) append(std::move(f.group), std::move(f.name));
}

void FeatureLayout::append(std::string group, std::string name) {
  if (by_name_.contains(name)) throw ValidationError("duplicate feature name " + name);
  by_name_[name] = features_.size();
  features_.push_back({std::move(group), std::move(name)});
}

std::optional<std::size_t> FeatureLayout::index_of(const std::string& name) const {
  auto it = by_name_.find(name);
  if (it == by_name_.end()) return std::nullopt;
  return it->second;
}

std::vector<std::size_t> FeatureLayout::group_indices(const std::string& group) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < features_.size(); ++i)
    if (features_[i].group == group) out.push_back(i);
  return out;
}

const char* split_name(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Test: return "test";
    case Split::None: break;
  }
  return "none";
}

Split parse_split(const std::string& s) {
  if (s == "train") return Split::Train;
  if (s == "test") return Split::Test;
  if (s == "none") return Split::None;
  throw FormatError("unknown split tag '" + s + "'");
}

std::vector<std::size_t> AfvTable::indices(Split s) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < rows.size(); ++i)
    if (split[i] == s) out.push_back(i);
  return out;
}

AfvTable AfvTable::subset(Split s) const {
  AfvTable out;
  out.layout = layout;
  out.class_names = class_names;
  for (std::size_t i : indices(s)) {
    out.rows.push_back(rows[i]);
    out.split.push_back(s);
  }
  return out;
}

int AfvTable::num_classes() const {
  int k = 0;
  for (const auto& r : rows) k = std::max(k, r.label + 1);
  for (const auto& [label, name] : class_names) k = std::max(k, label + 1);
  return k;
}

void AfvTable::validate() const {
  require(layout != nullptr, "AFV table has no layout");
  require(split.size() == rows.size(), "AFV table split tags do not match row count");
  for (const auto& r : rows) {
    require(r.values.size() == layout->size(), "AFV row length does not match layout");
    require(r.label >= 0, "negative class label");
    for (double v : r.values) require(std::isfinite(v), "AFV contains a non-finite value");
  }
}

std::string render_afv_table(const AfvTable& table) {
  table.validate();
  std::string out;
  for (const auto& [label, name] : table.class_names)
    out += "# class " + std::to_string(label) + " " + name + "\n";
  out += "label,success,split";
  for (const auto& f : table.layout->features()) out += "," + f.name;
  out += "\n";
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const auto& r = table.rows[i];
    out += std::to_string(r.label);
    out += r.attack_success ? ",1," : ",0,";
    out += split_name(table.split[i]);
    for (double v : r.values) out += "," + format_double(v);
    out += "\n";
  }
  return out;
}

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

// Group is recovered from the canonical name prefix.
std::string group_of(const std::string& name) {
  static const std::pair<const char*, const char*> prefixes[] = {
      {"region.", "region"},   {"extrema.", "extrema"}, {"hist.", "histogram"},
      {"test.", "stat_tests"}, {"emd.", "wasserstein"}, {"pca.", "pca"},
      {"lda.", "lda"},         {"rnn.", "rnn_votes"}};
  for (const auto& [p, g] : prefixes)
    if (name.rfind(p, 0) == 0) return g;
  return "other";
}

}  // namespace

AfvTable parse_afv_table(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  AfvTable table;
  while (std::getline(in, line) && line.rfind("# class ", 0) == 0) {
    std::istringstream ls(line.substr(8));
    int label = 0;
    ls >> label;
    std::string name;
    std::getline(ls >> std::ws, name);
    table.class_names[label] = name;
  }
  const auto header = split_csv(line);
  if (header.size() < 3 || header[0] != "label" || header[1] != "success" || header[2] != "split")
    throw FormatError("AFV table header must start with label,success,split");
  auto layout = std::make_shared<FeatureLayout>();
  for (std::size_t i = 3; i < header.size(); ++i) layout->append(group_of(header[i]), header[i]);
  table.layout = layout;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto cells = split_csv(line);
    if (cells.size() != header.size())
      throw FormatError("AFV table row " + std::to_string(lineno) + " has wrong cell count");
    Afv row;
    row.layout = layout;
    row.label = static_cast<int>(parse_int(cells[0]));
    row.attack_success = parse_int(cells[1]) != 0;
    row.values.reserve(layout->size());
    for (std::size_t i = 3; i < cells.size(); ++i) row.values.push_back(parse_double(cells[i]));
    table.rows.push_back(std::move(row));
    table.split.push_back(parse_split(cells[2]));
  }
  table.validate();
  return table;
}

void write_afv_table(const AfvTable& table, const std::filesystem::path& path) {
  write_text_file(path, render_afv_table(table));
}

AfvTable read_afv_table(const std::filesystem::path& path) {
  return parse_afv_table(read_text_file(path));
}

}  // namespace afv
