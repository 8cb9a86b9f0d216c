// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <numeric>
#include <set>

#include "jetbench/sampler.hpp"

using namespace jetbench;

namespace {

// Brute-force largest remainder over exact rationals w_c / den.
ClassCounts apportion_oracle(const std::array<std::uint64_t, kNumClasses>& w, std::uint64_t den,
                             std::size_t n) {
  ClassCounts out{};
  std::vector<std::pair<std::uint64_t, std::size_t>> rem;  // (remainder numerator, class)
  std::size_t used = 0;
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    out[c] = static_cast<std::size_t>(w[c] * n / den);
    used += out[c];
    rem.push_back({w[c] * n % den, c});
  }
  std::sort(rem.begin(), rem.end(), [&](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    if (w[a.second] != w[b.second]) return w[a.second] > w[b.second];
    return a.second < b.second;
  });
  for (std::size_t k = 0; used < n; ++k, ++used) ++out[rem[k].second];
  return out;
}

ClassSources toy_sources(std::size_t per_class, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<Jet> all;
  for (std::size_t c = 0; c < kNumClasses; ++c)
    for (std::size_t i = 0; i < per_class; ++i) {
      Jet j;
      j.label = class_at(c);
      j.particles = {{FourMomentum{double(i + 1), 0, 0, double(i + 1)}, ParticleType::kPhoton}};
      all.push_back(j);
    }
  std::shuffle(all.begin(), all.end(), rng);
  return group_by_class(std::move(all));
}

}  // namespace

TEST_CASE("balanced policy fractions") {
  const auto p = SamplingPolicy::balanced(27);
  CHECK(std::accumulate(p.weights.begin(), p.weights.end(), std::uint64_t{0}) == p.denominator);
  const auto c = apportion(p);
  CHECK(c[index(ClassLabel::kQCD)] == 9);
  CHECK(c[index(ClassLabel::kQqbBcs)] == 9);
  CHECK(c[index(ClassLabel::kBB)] == 3);
  CHECK(c[index(ClassLabel::kQQ)] == 3);
  CHECK(c[index(ClassLabel::kTauhTaue)] == 1);
  CHECK(c[index(ClassLabel::kTauhTaumu)] == 1);
  CHECK(c[index(ClassLabel::kTauhTauh)] == 1);
}

TEST_CASE("apportion at the full epoch size") {
  const auto c = apportion(SamplingPolicy::balanced(2'000'000));
  CHECK(c[index(ClassLabel::kQCD)] == 666'667);
  CHECK(c[index(ClassLabel::kQqbBcs)] == 666'667);
  CHECK(c[index(ClassLabel::kBB)] == 222'222);
  CHECK(std::accumulate(c.begin(), c.end(), std::size_t{0}) == 2'000'000);
}

TEST_CASE("apportion matches the largest-remainder oracle") {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 500; ++trial) {
    SamplingPolicy p;
    p.denominator = 0;
    for (auto& w : p.weights) p.denominator += (w = rng() % 50 + 1);
    p.epoch_size = rng() % 5000 + kNumClasses;
    CHECK(apportion(p) == apportion_oracle(p.weights, p.denominator, p.epoch_size));
  }
  for (std::size_t n = 1; n < kNumClasses; ++n) CHECK_THROWS(apportion(SamplingPolicy::balanced(n)));
  for (std::size_t n = kNumClasses; n < 200; ++n) {
    const auto p = SamplingPolicy::balanced(n);
    CHECK(apportion(p) == apportion_oracle(p.weights, p.denominator, n));
  }
}

TEST_CASE("policy validation") {
  SamplingPolicy p = SamplingPolicy::balanced(10);
  p.weights[0] += 1;
  CHECK_THROWS(p.validate());
  CHECK_THROWS(SamplingPolicy::balanced(0).validate());
}

TEST_CASE("sampler epochs have exact counts") {
  const auto src = toy_sources(50, 2);
  StratifiedSampler s(SamplingPolicy::balanced(100'000), src, 3);
  const auto& seq = s.begin_epoch();
  ClassCounts seen{};
  for (auto l : seq) ++seen[l];
  CHECK(seen == s.target_counts());
  ClassCounts from_jets{};
  std::size_t n = 0;
  while (!s.done()) {
    for (const auto& j : s.next_batch(977)) {
      ++from_jets[index(j.label)];
      ++n;
    }
  }
  CHECK(n == 100'000);
  CHECK(from_jets == s.target_counts());
  CHECK(s.realized_counts() == s.target_counts());
}

TEST_CASE("sampler order is random but seeded") {
  const auto src = toy_sources(20, 4);
  StratifiedSampler a(SamplingPolicy::balanced(270), src, 5), b(SamplingPolicy::balanced(270), src, 5),
      c(SamplingPolicy::balanced(270), src, 6);
  const auto ea = a.draw_epoch(), eb = b.draw_epoch(), ec = c.draw_epoch();
  CHECK(ea == eb);
  CHECK(ea != ec);
  // The second epoch differs from the first.
  CHECK(a.draw_epoch() != ea);
}

TEST_CASE("class pool cycles through every jet before repeating") {
  auto jets = std::make_shared<std::vector<Jet>>();
  for (int i = 0; i < 10; ++i) {
    Jet j;
    j.particles = {{FourMomentum{double(i + 1), 0, 0, double(i + 1)}, ParticleType::kPhoton}};
    jets->push_back(j);
  }
  ClassPool pool(jets, 7);
  for (int round = 0; round < 3; ++round) {
    std::set<double> seen;
    for (int i = 0; i < 10; ++i) seen.insert(pool.next().particles[0].p.px);
    CHECK(seen.size() == 10);
  }
}

TEST_CASE("sampler rejects empty classes") {
  auto src = toy_sources(3, 8);
  src[index(ClassLabel::kBB)] = std::make_shared<const std::vector<Jet>>();
  CHECK_THROWS(StratifiedSampler(SamplingPolicy::balanced(27), src, 1));
}

TEST_CASE("split manifests") {
  std::vector<std::string> files;
  for (int i = 0; i < 10; ++i) files.push_back("f" + std::to_string(i));
  std::mt19937_64 rng(9);
  auto m = split_files(files, {0.8, 0.1, 0.1}, rng);
  CHECK(m.train.size() == 8);
  CHECK(m.val.size() == 1);
  CHECK(m.test.size() == 1);

  std::mt19937_64 r1(11), r2(11);
  const auto m1 = split_files(files, {0.6, 0.2, 0.2}, r1);
  const auto m2 = split_files(files, {0.6, 0.2, 0.2}, r2);
  CHECK(m1.train == m2.train);
  CHECK(m1.val == m2.val);
  CHECK(m1.test == m2.test);

  std::mt19937_64 g(12);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 3 + g() % 60;
    std::vector<std::string> fs;
    for (std::size_t i = 0; i < n; ++i) fs.push_back("d/" + std::to_string(g()) + ".jetb");
    std::sort(fs.begin(), fs.end());
    fs.erase(std::unique(fs.begin(), fs.end()), fs.end());
    const auto s = split_files(fs, {0.6, 0.2, 0.2}, g);
    std::multiset<std::string> all;
    for (const auto* part : {&s.train, &s.val, &s.test}) all.insert(part->begin(), part->end());
    CHECK(all.size() == fs.size());
    CHECK(std::set<std::string>(all.begin(), all.end()) == std::set<std::string>(fs.begin(), fs.end()));
  }

  SplitManifest bad{{"a", "b"}, {"b"}, {"c"}};
  CHECK_THROWS(bad.validate());
}

TEST_CASE("manifest file round trip") {
  const auto path = std::filesystem::temp_directory_path() / "jetbench_manifest_test.txt";
  SplitManifest m{{"a.jetb", "b.jetb"}, {"c.jetb"}, {"d.jetb", "e.jetb"}};
  write_manifest(path, m);
  const auto back = read_manifest(path);
  CHECK(back.train == m.train);
  CHECK(back.val == m.val);
  CHECK(back.test == m.test);
  std::filesystem::remove(path);
}

TEST_CASE("mix_seed gives distinct streams") {
  std::set<std::uint64_t> seen;
  for (std::uint64_t s = 0; s < 100; ++s)
    for (std::uint64_t k = 0; k < 100; ++k) seen.insert(mix_seed(s, k));
  CHECK(seen.size() == 10'000);
  CHECK(mix_seed(1, 2) == mix_seed(1, 2));
}
