#pragma once

// Line-oriented "key value..." text format shared by profiles, embedding
// models, and cluster maps. First line is "<kind> <version>". Doubles use the
// shortest representation that round-trips exactly.

#include <filesystem>
#include <map>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace afv {

std::string format_double(double x);
double parse_double(std::string_view s);
long long parse_int(std::string_view s);

class KvWriter {
 public:
  KvWriter(std::string_view kind, int version);

  void put(std::string_view key, double value);
  void put_int(std::string_view key, long long value);
  void put_string(std::string_view key, std::string_view value);
  void put_array(std::string_view key, std::span<const double> values);

  const std::string& str() const { return text_; }
  void save(const std::filesystem::path& path) const;

 private:
  std::string text_;
};

class KvReader {
 public:
  KvReader(std::string_view text, std::string_view kind, int version);
  static KvReader load(const std::filesystem::path& path, std::string_view kind, int version);

  bool has(const std::string& key) const { return fields_.contains(key); }
  double get(const std::string& key) const;
  long long get_int(const std::string& key) const;
  std::string get_string(const std::string& key) const;
  std::vector<double> get_array(const std::string& key) const;

 private:
  const std::vector<std::string>& tokens(const std::string& key) const;
  std::map<std::string, std::vector<std::string>> fields_;
};

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view text);

}  // namespace afv
