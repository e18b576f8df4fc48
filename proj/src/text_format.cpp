#include "afv/text_format.hpp"

#include <charconv>
#include <cmath>
#include <fstream>

#include "afv/error.hpp"

namespace afv {

std::string format_double(double x) {
  if (x == 0.0) x = 0.0;  // fold -0 so text output is sign-stable
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, x);
  if (ec != std::errc{}) throw ValidationError("cannot format double");
  return std::string(buf, end);
}

double parse_double(std::string_view s) {
  double x = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), x);
  if (ec != std::errc{} || ptr != s.data() + s.size())
    throw FormatError("not a number: '" + std::string(s) + "'");
  return x;
}

long long parse_int(std::string_view s) {
  long long x = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), x);
  if (ec != std::errc{} || ptr != s.data() + s.size())
    throw FormatError("not an integer: '" + std::string(s) + "'");
  return x;
}

KvWriter::KvWriter(std::string_view kind, int version) {
  text_.append(kind).append(" ").append(std::to_string(version)).append("\n");
}

void KvWriter::put(std::string_view key, double value) {
  text_.append(key).append(" ").append(format_double(value)).append("\n");
}

void KvWriter::put_int(std::string_view key, long long value) {
  text_.append(key).append(" ").append(std::to_string(value)).append("\n");
}

void KvWriter::put_string(std::string_view key, std::string_view value) {
  text_.append(key).append(" ").append(value).append("\n");
}

void KvWriter::put_array(std::string_view key, std::span<const double> values) {
  text_.append(key).append(" ").append(std::to_string(values.size()));
  for (double v : values) text_.append(" ").append(format_double(v));
  text_.append("\n");
}

void KvWriter::save(const std::filesystem::path& path) const { write_text_file(path, text_); }

KvReader::KvReader(std::string_view text, std::string_view kind, int version) {
  std::istringstream in{std::string(text)};
  std::string line;
  const std::string header = std::string(kind) + " " + std::to_string(version);
  if (!std::getline(in, line) || line != header)
    throw FormatError("expected header '" + header + "', got '" + line + "'");
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string key, tok;
    ls >> key;
    std::vector<std::string> toks;
    while (ls >> tok) toks.push_back(tok);
    fields_[key] = std::move(toks);
  }
}

KvReader KvReader::load(const std::filesystem::path& path, std::string_view kind, int version) {
  return KvReader(read_text_file(path), kind, version);
}

const std::vector<std::string>& KvReader::tokens(const std::string& key) const {
  auto it = fields_.find(key);
  if (it == fields_.end()) throw FormatError("missing key '" + key + "'");
  return it->second;
}

double KvReader::get(const std::string& key) const {
  const auto& t = tokens(key);
  if (t.size() != 1) throw FormatError("key '" + key + "' is not a scalar");
  return parse_double(t[0]);
}

long long KvReader::get_int(const std::string& key) const {
  const auto& t = tokens(key);
  if (t.size() != 1) throw FormatError("key '" + key + "' is not a scalar");
  return parse_int(t[0]);
}

std::string KvReader::get_string(const std::string& key) const {
  const auto& t = tokens(key);
  std::string out;
  for (std::size_t i = 0; i < t.size(); ++i) out += (i ? " " : "") + t[i];
  return out;
}

std::vector<double> KvReader::get_array(const std::string& key) const {
  const auto& t = tokens(key);
  if (t.empty()) throw FormatError("key '" + key + "' has no length");
  const auto n = static_cast<std::size_t>(parse_int(t[0]));
  if (t.size() != n + 1) throw FormatError("key '" + key + "' length mismatch");
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = parse_double(t[i + 1]);
  return out;
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::filesystem::path& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace afv
