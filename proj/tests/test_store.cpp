#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "framemae/rng.hpp"
#include "framemae/tensor_store.hpp"

using namespace framemae;

namespace {
std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}
}  // namespace

TEST_CASE("round trip preserves values bit-exactly") {
  Rng rng(1);
  TensorStore store;
  Mat a(3, 5);
  for (Eigen::Index r = 0; r < 3; ++r)
    for (Eigen::Index c = 0; c < 5; ++c) a(r, c) = rng.normal();
  IMat b(2, 2);
  b << 1, -7, 42, 1000000007;
  store.put("weights", a);
  store.put("tokens", b);
  store.set_meta("kind", "test");
  const std::string path = temp_path("fm_store_rt.bin");
  store.save(path);

  const TensorStore loaded = TensorStore::load(path);
  CHECK(loaded.meta("kind") == "test");
  CHECK(loaded.get_f64("weights") == a);
  CHECK(loaded.get_i64("tokens") == b);
  CHECK(loaded.names() == std::vector<std::string>{"weights", "tokens"});
  std::remove(path.c_str());
}

TEST_CASE("identical contents produce identical bytes") {
  auto build = [] {
    TensorStore s;
    Mat m(2, 2);
    m << 0.1, -0.2, 0.3, 1e-300;
    s.put("m", m);
    s.set_meta("seed", "7");
    return s;
  };
  const std::string p1 = temp_path("fm_store_a.bin");
  const std::string p2 = temp_path("fm_store_b.bin");
  build().save(p1);
  build().save(p2);
  std::ifstream f1(p1, std::ios::binary), f2(p2, std::ios::binary);
  const std::string b1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
  const std::string b2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
  CHECK(b1 == b2);
  std::remove(p1.c_str());
  std::remove(p2.c_str());
}

TEST_CASE("corrupted payload fails the checksum") {
  TensorStore store;
  Mat m = Mat::Constant(4, 4, 3.14);
  store.put("m", m);
  const std::string path = temp_path("fm_store_corrupt.bin");
  store.save(path);
  {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(-1, std::ios::end);
    f.put('\x7f');
  }
  CHECK_THROWS_AS(TensorStore::load(path), FormatError);
  std::remove(path.c_str());
}

TEST_CASE("missing tensors and garbage files raise format errors") {
  TensorStore store;
  CHECK_THROWS_AS(store.get_f64("nope"), FormatError);
  const std::string path = temp_path("fm_store_garbage.bin");
  {
    std::ofstream f(path, std::ios::binary);
    f << "not a container";
  }
  CHECK_THROWS_AS(TensorStore::load(path), FormatError);
  std::remove(path.c_str());
}
