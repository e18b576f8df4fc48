#include <doctest.h>

#include <cstring>
#include <fstream>

#include "afv/error.hpp"
#include "afv/latent_io.hpp"
#include "unit/helpers.hpp"

using namespace afv;
using testing_support::scratch;
using testing_support::slurp;

namespace {

void spit(const std::filesystem::path& p, const std::string& bytes) {
  std::ofstream out(p, std::ios::binary);
  out << bytes;
}

LatentDataset golden_dataset() {
  LatentDataset d;
  d.samples.emplace_back(Shape{2, 1, 2}, std::vector<float>{1.0f, 2.0f, 3.0f, 4.0f});
  d.samples.emplace_back(Shape{2, 1, 2}, std::vector<float>{-1.5f, 0.1f, 1e-20f, 3.4e38f});
  d.labels = {0, 3};
  d.attack_success = {true, false};
  d.class_names = {{0, "clean"}, {3, "mean_shift"}};
  return d;
}

}  // namespace

TEST_CASE("single small sample has header plus 16 payload bytes") {
  const auto dir = scratch("io_small");
  LatentDataset d;
  d.samples.emplace_back(Shape{2, 1, 2}, std::vector<float>{1, 2, 3, 4});
  d.labels = {0};
  d.attack_success = {true};
  d.class_names = {{0, "clean"}};
  const auto bytes = write_dump(d, dir / "a.afvl");
  CHECK(bytes == kDumpHeaderBytes + 16);
  CHECK(std::filesystem::file_size(dir / "a.afvl") == bytes);
}

TEST_CASE("wide layer payload size") {
  const auto dir = scratch("io_wide");
  auto d = testing_support::gaussian_dataset(Shape{640, 8, 8}, 3, 1);
  const auto bytes = write_dump(d, dir / "w.afvl");
  CHECK(bytes == kDumpHeaderBytes + 3ull * 40960 * 4);
  const auto h = read_dump_header(dir / "w.afvl");
  CHECK(h.n_samples == 3);
  CHECK(h.shape == Shape{640, 8, 8});
}

TEST_CASE("round trip is exact") {
  const auto dir = scratch("io_rt");
  auto d = testing_support::gaussian_dataset(Shape{3, 2, 5}, 17, 9);
  d.labels[4] = 2;
  d.attack_success[4] = false;
  d.class_names[2] = "two";
  write_dump(d, dir / "r.afvl");
  const auto back = read_dump(dir / "r.afvl");
  CHECK(back == d);
  CHECK(back.class_names == d.class_names);
  CHECK(back.attack_success == d.attack_success);
}

TEST_CASE("golden fixture parses and re-serializes byte for byte") {
  const std::filesystem::path golden = std::filesystem::path(AFV_FIXTURE_DIR) / "golden_small.afvl";
  const auto d = read_dump(golden);
  CHECK(d == golden_dataset());
  CHECK(d.labels == std::vector<int>{0, 3});
  CHECK_FALSE(d.attack_success[1]);

  const auto dir = scratch("io_golden");
  write_dump(golden_dataset(), dir / "g.afvl");
  CHECK(slurp(dir / "g.afvl") == slurp(golden));
  CHECK(slurp(dir / "g.afvl.manifest") == slurp(manifest_path(golden)));
}

TEST_CASE("header fields are little endian at fixed offsets") {
  const auto raw = slurp(std::filesystem::path(AFV_FIXTURE_DIR) / "golden_small.afvl");
  REQUIRE(raw.size() == kDumpHeaderBytes + 32);
  CHECK(raw.substr(0, 4) == "AFVL");
  CHECK(static_cast<unsigned char>(raw[4]) == 1);
  CHECK(static_cast<unsigned char>(raw[6]) == 2);   // n_samples
  CHECK(static_cast<unsigned char>(raw[10]) == 2);  // C
  CHECK(static_cast<unsigned char>(raw[14]) == 1);  // H
  CHECK(static_cast<unsigned char>(raw[18]) == 2);  // W
  CHECK(static_cast<unsigned char>(raw[22]) == 0);  // f32
  float first;
  std::memcpy(&first, raw.data() + 23, 4);
  CHECK(first == 1.0f);
}

TEST_CASE("error paths") {
  const auto dir = scratch("io_err");
  const auto golden = std::filesystem::path(AFV_FIXTURE_DIR) / "golden_small.afvl";
  const std::string good = slurp(golden);
  const std::string manifest = slurp(manifest_path(golden));

  SUBCASE("empty dataset") {
    LatentDataset empty;
    CHECK_THROWS_WITH_AS(write_dump(empty, dir / "e.afvl"), "empty dataset", ValidationError);
  }
  SUBCASE("bad magic") {
    std::string bad = good;
    bad.replace(0, 4, "XXXX");
    spit(dir / "m.afvl", bad);
    spit(dir / "m.afvl.manifest", manifest);
    CHECK_THROWS_WITH_AS(read_dump(dir / "m.afvl"), "bad magic", FormatError);
  }
  SUBCASE("truncated payload") {
    spit(dir / "t.afvl", good.substr(0, good.size() - 3));
    spit(dir / "t.afvl.manifest", manifest);
    CHECK_THROWS_WITH_AS(read_dump(dir / "t.afvl"), "truncated", FormatError);
  }
  SUBCASE("truncated header") {
    spit(dir / "h.afvl", good.substr(0, 10));
    spit(dir / "h.afvl.manifest", manifest);
    CHECK_THROWS_WITH_AS(read_dump(dir / "h.afvl"), "truncated", FormatError);
  }
  SUBCASE("unknown dtype") {
    std::string bad = good;
    bad[22] = 7;
    spit(dir / "d.afvl", bad);
    spit(dir / "d.afvl.manifest", manifest);
    CHECK_THROWS_AS(read_dump(dir / "d.afvl"), FormatError);
  }
  SUBCASE("manifest count mismatch") {
    spit(dir / "c.afvl", good);
    std::string m = manifest;
    m.replace(m.find("n_samples 2"), 11, "n_samples 3");
    spit(dir / "c.afvl.manifest", m);
    CHECK_THROWS_WITH_AS(read_dump(dir / "c.afvl"), "manifest/sample-count mismatch", FormatError);
  }
  SUBCASE("missing file is an I/O error") {
    CHECK_THROWS_AS(read_dump(dir / "nope.afvl"), IoError);
  }
  SUBCASE("shape mismatch among samples") {
    auto d = golden_dataset();
    d.samples[1] = LatentTensor(Shape{1, 1, 4}, std::vector<float>{1, 2, 3, 4});
    CHECK_THROWS_WITH_AS(write_dump(d, dir / "s.afvl"), "shape mismatch among samples", ValidationError);
  }
  SUBCASE("non-finite values are rejected") {
    auto d = golden_dataset();
    d.samples[0].values[2] = std::numeric_limits<float>::quiet_NaN();
    CHECK_THROWS_AS(write_dump(d, dir / "n.afvl"), ValidationError);
  }
  SUBCASE("label without class name") {
    auto d = golden_dataset();
    d.labels[1] = 5;
    CHECK_THROWS_AS(write_dump(d, dir / "l.afvl"), ValidationError);
  }
}
