// SPDX-License-Identifier: Apache-2.0

#include "jetbench/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>

namespace jetbench {

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

SamplingPolicy SamplingPolicy::balanced(std::size_t epoch_size) {
  SamplingPolicy p;
  p.denominator = 27;
  p.weights[index(ClassLabel::kQCD)] = 9;
  p.weights[index(ClassLabel::kQqbBcs)] = 9;
  p.weights[index(ClassLabel::kBB)] = 3;
  p.weights[index(ClassLabel::kQQ)] = 3;
  p.weights[index(ClassLabel::kTauhTaue)] = 1;
  p.weights[index(ClassLabel::kTauhTaumu)] = 1;
  p.weights[index(ClassLabel::kTauhTauh)] = 1;
  p.epoch_size = epoch_size;
  return p;
}

void SamplingPolicy::validate() const {
  const auto total = std::accumulate(weights.begin(), weights.end(), std::uint64_t{0});
  if (denominator == 0 || total != denominator)
    throw ConfigError("sampling fractions must sum to one (weights sum to " +
                      std::to_string(total) + " over " + std::to_string(denominator) + ")");
  if (epoch_size < kNumClasses)
    throw ConfigError("epoch size " + std::to_string(epoch_size) + " is below the class count");
}

ClassCounts apportion(const SamplingPolicy& policy) {
  policy.validate();
  ClassCounts counts{};
  std::array<std::uint64_t, kNumClasses> rem{};
  std::size_t assigned = 0;
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    const std::uint64_t q = policy.epoch_size * policy.weights[c];
    counts[c] = q / policy.denominator;
    rem[c] = q % policy.denominator;
    assigned += counts[c];
  }
  std::array<std::size_t, kNumClasses> order{};
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (rem[a] != rem[b]) return rem[a] > rem[b];
    return policy.weights[a] > policy.weights[b];
  });
  for (std::size_t i = 0; assigned < policy.epoch_size; ++i, ++assigned) ++counts[order[i]];
  return counts;
}

ClassPool::ClassPool(std::shared_ptr<const std::vector<Jet>> jets, std::uint64_t seed)
    : jets_(std::move(jets)), rng_(seed) {
  order_.resize(jets_->size());
  std::iota(order_.begin(), order_.end(), 0);
  reshuffle();
}

void ClassPool::reshuffle() {
  std::shuffle(order_.begin(), order_.end(), rng_);
  cursor_ = 0;
}

const Jet& ClassPool::next() {
  if (cursor_ == order_.size()) reshuffle();
  return (*jets_)[order_[cursor_++]];
}

ClassSources group_by_class(std::vector<Jet> jets) {
  std::array<std::vector<Jet>, kNumClasses> groups;
  for (auto& j : jets) groups[index(j.label)].push_back(std::move(j));
  ClassSources out;
  for (std::size_t c = 0; c < kNumClasses; ++c)
    out[c] = std::make_shared<const std::vector<Jet>>(std::move(groups[c]));
  return out;
}

StratifiedSampler::StratifiedSampler(SamplingPolicy policy, const ClassSources& sources,
                                     std::uint64_t seed)
    : policy_(policy), counts_(apportion(policy)), rng_(mix_seed(seed, kNumClasses)) {
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    if (counts_[c] > 0 && (!sources[c] || sources[c]->empty()))
      throw ConfigError("no jets available for class " + std::string(class_name(class_at(c))));
    pools_.emplace_back(sources[c] ? sources[c] : std::make_shared<const std::vector<Jet>>(),
                        mix_seed(seed, c));
  }
  position_ = 0;
}

const std::vector<std::uint8_t>& StratifiedSampler::begin_epoch() {
  sequence_.clear();
  sequence_.reserve(policy_.epoch_size);
  for (std::size_t c = 0; c < kNumClasses; ++c)
    sequence_.insert(sequence_.end(), counts_[c], static_cast<std::uint8_t>(c));
  std::shuffle(sequence_.begin(), sequence_.end(), rng_);
  realized_ = {};
  position_ = 0;
  return sequence_;
}

const Jet& StratifiedSampler::next() {
  if (done()) throw std::out_of_range("epoch exhausted; call begin_epoch()");
  const std::size_t c = sequence_[position_++];
  ++realized_[c];
  return pools_[c].next();
}

std::vector<Jet> StratifiedSampler::next_batch(std::size_t n) {
  std::vector<Jet> out;
  out.reserve(n);
  while (out.size() < n && !done()) out.push_back(next());
  return out;
}

std::vector<Jet> StratifiedSampler::draw_epoch() {
  begin_epoch();
  return next_batch(policy_.epoch_size);
}

const std::vector<std::string>& SplitManifest::split(const std::string& name) const {
  if (name == "train") return train;
  if (name == "val") return val;
  if (name == "test") return test;
  throw ConfigError("unknown split '" + name + "' (expected train, val or test)");
}

void SplitManifest::validate() const {
  std::set<std::string> seen;
  for (const auto* part : {&train, &val, &test})
    for (const auto& f : *part)
      if (!seen.insert(f).second) throw ConfigError("file listed in more than one split: " + f);
}

SplitManifest split_files(std::vector<std::string> files, const std::array<double, 3>& ratios,
                          std::mt19937_64& rng) {
  if (files.size() < 3)
    throw ConfigError("need at least 3 files to split, got " + std::to_string(files.size()));
  const double total = ratios[0] + ratios[1] + ratios[2];
  if (std::abs(total - 1.0) > 1e-9 || *std::min_element(ratios.begin(), ratios.end()) < 0.0)
    throw ConfigError("split ratios must be non-negative and sum to 1");
  std::shuffle(files.begin(), files.end(), rng);

  const std::size_t n = files.size();
  std::array<std::size_t, 3> sizes{};
  std::array<double, 3> frac{};
  std::size_t used = 0;
  for (int i = 0; i < 3; ++i) {
    const double q = ratios[i] * static_cast<double>(n);
    sizes[i] = static_cast<std::size_t>(std::floor(q + 1e-9));
    frac[i] = q - static_cast<double>(sizes[i]);
    used += sizes[i];
  }
  std::array<int, 3> order = {0, 1, 2};
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return frac[a] > frac[b]; });
  for (int i = 0; used < n; ++i, ++used) ++sizes[order[i % 3]];
  // Every split gets at least one file.
  for (int i = 0; i < 3; ++i) {
    if (sizes[i] > 0) continue;
    auto big = std::max_element(sizes.begin(), sizes.end());
    --*big;
    ++sizes[i];
  }
  SplitManifest m;
  auto it = files.begin();
  m.train.assign(it, it + sizes[0]);
  it += sizes[0];
  m.val.assign(it, it + sizes[1]);
  it += sizes[1];
  m.test.assign(it, files.end());
  return m;
}

void write_manifest(const std::filesystem::path& path, const SplitManifest& m) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write manifest " + path.string());
  const std::array<std::pair<const char*, const std::vector<std::string>*>, 3> parts = {
      {{"train", &m.train}, {"val", &m.val}, {"test", &m.test}}};
  for (const auto& [name, files] : parts) {
    out << '[' << name << "]\n";
    for (const auto& f : *files) out << f << '\n';
  }
}

SplitManifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open manifest " + path.string());
  SplitManifest m;
  std::vector<std::string>* current = nullptr;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    if (line == "[train]") current = &m.train;
    else if (line == "[val]") current = &m.val;
    else if (line == "[test]") current = &m.test;
    else if (line.front() == '[')
      throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": unknown section " + line);
    else if (!current)
      throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": path before any section");
    else
      current->push_back(line);
  }
  m.validate();
  return m;
}

NaturalStream::NaturalStream(std::vector<std::filesystem::path> files) : files_(std::move(files)) {}

std::optional<Jet> NaturalStream::next() {
  while (file_ < files_.size()) {
    if (!reader_) reader_ = std::make_unique<JetReader>(files_[file_]);
    if (auto j = reader_->next()) return j;
    reader_.reset();
    ++file_;
  }
  return std::nullopt;
}

}  // namespace jetbench
