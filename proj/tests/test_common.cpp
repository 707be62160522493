#include <doctest.h>

#include <cmath>
#include <set>

#include "sagcn/common.hpp"
#include "test_helpers.hpp"

using namespace sagcn;

TEST_CASE("sha256 matches known vectors") {
  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
}

TEST_CASE("sha256_file_hex hashes file contents") {
  testutil::TempDir tmp("sha");
  const auto p = tmp.path / "x.txt";
  write_file_atomic(p, "abc");
  CHECK(sha256_file_hex(p) == sha256_hex("abc"));
}

TEST_CASE("write_file_atomic round trips and creates parents") {
  testutil::TempDir tmp("atomic");
  const auto p = tmp.path / "a" / "b" / "f.txt";
  write_file_atomic(p, "hello\nworld");
  CHECK(read_file(p) == "hello\nworld");
  write_file_atomic(p, "second");
  CHECK(read_file(p) == "second");
}

TEST_CASE("rng is deterministic per seed") {
  Rng a(42), b(42), c(43);
  bool all_equal = true, any_diff = false;
  for (int i = 0; i < 100; ++i) {
    const auto x = a.next();
    all_equal = all_equal && x == b.next();
    any_diff = any_diff || x != c.next();
  }
  CHECK(all_equal);
  CHECK(any_diff);
}

TEST_CASE("mix_seed separates salts") {
  CHECK(mix_seed(7, 0) != mix_seed(7, 1));
  CHECK(mix_seed(7, 0) != mix_seed(8, 0));
  CHECK(mix_seed(7, 5) == mix_seed(7, 5));
}

TEST_CASE("uniform stays in [0,1) and below stays in range") {
  Rng rng(1);
  for (int i = 0; i < 10000; ++i) {
    const double u = rng.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
  }
  for (int i = 0; i < 10000; ++i) CHECK(rng.below(7) < 7);
}

TEST_CASE("below is roughly uniform") {
  Rng rng(99);
  const int n = 10, draws = 100000;
  std::vector<int> counts(n, 0);
  for (int i = 0; i < draws; ++i) ++counts[static_cast<int>(rng.below(n))];
  /* chi-square, df=9, 99.9th percentile = 27.88 */
  const double expected = static_cast<double>(draws) / n;
  double chi2 = 0.0;
  for (int c : counts) chi2 += (c - expected) * (c - expected) / expected;
  CHECK(chi2 < 27.88);
}

TEST_CASE("normal has unit moments") {
  Rng rng(5);
  const int n = 200000;
  double sum = 0.0, sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x = rng.normal();
    sum += x;
    sq += x * x;
  }
  const double mean = sum / n;
  const double var = sq / n - mean * mean;
  CHECK(std::abs(mean) < 0.01);
  CHECK(std::abs(var - 1.0) < 0.02);
}

TEST_CASE("shuffle permutes without loss") {
  Rng rng(3);
  std::vector<int> v(50);
  for (int i = 0; i < 50; ++i) v[i] = i;
  auto w = v;
  rng.shuffle(w);
  CHECK(w != v);  /* astronomically unlikely to be identity */
  std::set<int> s(w.begin(), w.end());
  CHECK(s.size() == 50);
}

TEST_CASE("shuffle is deterministic") {
  std::vector<int> a{1, 2, 3, 4, 5, 6, 7, 8}, b{1, 2, 3, 4, 5, 6, 7, 8};
  Rng r1(11), r2(11);
  r1.shuffle(a);
  r2.shuffle(b);
  CHECK(a == b);
}

TEST_CASE("string helpers") {
  CHECK(to_lower("Ease OF Use") == "ease of use");
  CHECK(trim("  x y\t\n") == "x y");
  CHECK(starts_with("prefix rest", "prefix"));
  CHECK(!starts_with("pre", "prefix"));
}

TEST_CASE("mat layout and accessors") {
  Mat m(2, 3);
  m.at(1, 2) = 4.5;
  CHECK(m.row(1)[2] == 4.5);
  CHECK(m.data.size() == 6);
  m.zero();
  CHECK(m.at(1, 2) == 0.0);
}
