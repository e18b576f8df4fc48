#include "afv/latent_io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "afv/error.hpp"

namespace afv {

namespace {

template <class T>
void put_le(std::string& out, T value) {
  using U = std::make_unsigned_t<T>;
  auto u = static_cast<U>(value);
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    out.push_back(static_cast<char>(u & 0xFF));
    u = static_cast<U>(u >> 8);
  }
}

template <class T>
T get_le(const unsigned char* p) {
  using U = std::make_unsigned_t<T>;
  U u = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) u |= static_cast<U>(U{p[i]} << (8 * i));
  return static_cast<T>(u);
}

DumpHeader parse_header(const unsigned char* p) {
  if (std::memcmp(p, kDumpMagic, 4) != 0) throw FormatError("bad magic");
  DumpHeader h;
  h.version = get_le<std::uint16_t>(p + 4);
  h.n_samples = get_le<std::uint32_t>(p + 6);
  h.shape.channels = get_le<std::uint32_t>(p + 10);
  h.shape.height = get_le<std::uint32_t>(p + 14);
  h.shape.width = get_le<std::uint32_t>(p + 18);
  h.dtype_code = p[22];
  if (h.version != kDumpVersion) throw FormatError("unsupported version " + std::to_string(h.version));
  if (h.dtype_code != kDtypeF32) throw FormatError("unknown dtype " + std::to_string(h.dtype_code));
  if (h.shape.size() == 0) throw FormatError("zero-sized shape in header");
  return h;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw IoError("read failed: " + path.string());
  return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

std::string render_manifest(const LatentDataset& d) {
  std::ostringstream m;
  const Shape s = d.shape();
  m << "afvl-manifest 1\n";
  m << "n_samples " << d.size() << "\n";
  m << "shape " << s.channels << " " << s.height << " " << s.width << "\n";
  for (const auto& [label, name] : d.class_names) m << "class " << label << " " << name << "\n";
  for (std::size_t i = 0; i < d.size(); ++i)
    m << "sample " << i << " " << d.labels[i] << " " << (d.attack_success[i] ? 1 : 0) << "\n";
  return m.str();
}

void parse_manifest(const std::string& text, LatentDataset& d, const DumpHeader& h) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != "afvl-manifest 1") throw FormatError("bad manifest header");
  std::size_t declared = 0;
  bool have_count = false;
  d.labels.assign(h.n_samples, 0);
  d.attack_success.assign(h.n_samples, false);
  std::vector<bool> seen(h.n_samples, false);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "n_samples") {
      ls >> declared;
      have_count = true;
    } else if (key == "shape") {
      Shape s;
      ls >> s.channels >> s.height >> s.width;
      if (!(s == h.shape)) throw FormatError("manifest shape disagrees with dump header");
    } else if (key == "class") {
      int label = 0;
      ls >> label;
      std::string name;
      std::getline(ls >> std::ws, name);
      d.class_names[label] = name;
    } else if (key == "sample") {
      std::size_t idx = 0;
      int label = 0, ok = 0;
      if (!(ls >> idx >> label >> ok)) throw FormatError("malformed sample record: " + line);
      if (idx >= h.n_samples) throw FormatError("manifest/sample-count mismatch");
      d.labels[idx] = label;
      d.attack_success[idx] = ok != 0;
      seen[idx] = true;
    } else {
      throw FormatError("unknown manifest key: " + key);
    }
    if (ls.fail()) throw FormatError("malformed manifest line: " + line);
  }
  if (!have_count || declared != h.n_samples) throw FormatError("manifest/sample-count mismatch");
  if (!std::all_of(seen.begin(), seen.end(), [](bool b) { return b; }))
    throw FormatError("manifest/sample-count mismatch");
}

}  // namespace

LatentTensor::LatentTensor(Shape s, std::vector<float> v) : shape(s), values(std::move(v)) {}

void LatentTensor::validate() const {
  if (shape.size() == 0) throw ValidationError("tensor shape has a zero dimension");
  if (values.size() != shape.size())
    throw ValidationError("tensor length " + std::to_string(values.size()) + " != C*H*W " +
                          std::to_string(shape.size()));
  for (float x : values)
    if (!std::isfinite(x)) throw ValidationError("tensor contains a non-finite value");
}

Shape LatentDataset::shape() const {
  if (samples.empty()) throw ValidationError("empty dataset");
  return samples.front().shape;
}

void LatentDataset::validate() const {
  if (samples.empty()) throw ValidationError("empty dataset");
  if (labels.size() != samples.size() || attack_success.size() != samples.size())
    throw ValidationError("labels/success flags do not match sample count");
  const Shape s = samples.front().shape;
  for (const auto& t : samples) {
    if (!(t.shape == s)) throw ValidationError("shape mismatch among samples");
    t.validate();
  }
  for (int label : labels)
    if (!class_names.contains(label))
      throw ValidationError("label " + std::to_string(label) + " has no class name");
}

bool LatentDataset::operator==(const LatentDataset& o) const {
  if (labels != o.labels || attack_success != o.attack_success || class_names != o.class_names ||
      samples.size() != o.samples.size())
    return false;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& a = samples[i];
    const auto& b = o.samples[i];
    if (!(a.shape == b.shape) || a.values.size() != b.values.size()) return false;
    // Bitwise comparison so that -0.0f and 0.0f are distinguished.
    if (std::memcmp(a.values.data(), b.values.data(), a.values.size() * sizeof(float)) != 0)
      return false;
  }
  return true;
}

std::filesystem::path manifest_path(const std::filesystem::path& dump) {
  return std::filesystem::path(dump.string() + ".manifest");
}

std::uint64_t write_dump(const LatentDataset& dataset, const std::filesystem::path& path) {
  dataset.validate();
  const Shape s = dataset.shape();
  std::string bytes;
  bytes.reserve(kDumpHeaderBytes + dataset.size() * s.size() * 4);
  bytes.append(kDumpMagic, 4);
  put_le<std::uint16_t>(bytes, kDumpVersion);
  put_le<std::uint32_t>(bytes, static_cast<std::uint32_t>(dataset.size()));
  put_le<std::uint32_t>(bytes, s.channels);
  put_le<std::uint32_t>(bytes, s.height);
  put_le<std::uint32_t>(bytes, s.width);
  bytes.push_back(static_cast<char>(kDtypeF32));
  for (const auto& t : dataset.samples)
    for (float x : t.values) put_le<std::uint32_t>(bytes, std::bit_cast<std::uint32_t>(x));
  write_file(path, bytes);
  write_file(manifest_path(path), render_manifest(dataset));
  return bytes.size();
}

DumpHeader read_dump_header(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  unsigned char buf[kDumpHeaderBytes];
  in.read(reinterpret_cast<char*>(buf), kDumpHeaderBytes);
  if (in.gcount() < 4) throw FormatError("truncated");
  if (std::memcmp(buf, kDumpMagic, 4) != 0) throw FormatError("bad magic");
  if (static_cast<std::size_t>(in.gcount()) != kDumpHeaderBytes) throw FormatError("truncated");
  return parse_header(buf);
}

LatentDataset read_dump(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  if (bytes.size() >= 4 && std::memcmp(p, kDumpMagic, 4) != 0) throw FormatError("bad magic");
  if (bytes.size() < kDumpHeaderBytes) throw FormatError("truncated");
  const DumpHeader h = parse_header(p);
  const std::size_t per = h.shape.size();
  const std::size_t need = kDumpHeaderBytes + std::size_t{h.n_samples} * per * 4;
  if (bytes.size() < need) throw FormatError("truncated");
  if (bytes.size() > need) throw FormatError("trailing bytes after payload");

  LatentDataset d;
  d.samples.reserve(h.n_samples);
  const unsigned char* q = p + kDumpHeaderBytes;
  for (std::uint32_t i = 0; i < h.n_samples; ++i) {
    std::vector<float> v(per);
    for (std::size_t k = 0; k < per; ++k, q += 4) v[k] = std::bit_cast<float>(get_le<std::uint32_t>(q));
    d.samples.emplace_back(h.shape, std::move(v));
  }
  parse_manifest(read_file(manifest_path(path)), d, h);
  d.validate();
  return d;
}

}  // namespace afv
