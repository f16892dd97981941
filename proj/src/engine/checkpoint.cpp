// SPDX-License-Identifier: Apache-2.0
#include "sagmm/checkpoint.hpp"

#include <array>
#include <cstring>
#include <fstream>

#include "sagmm/errors.hpp"

namespace sagmm {
namespace {

constexpr std::array<char, 8> kMagic{'S', 'A', 'G', 'M', 'M', 'C', 'K', 'P'};

class Writer {
 public:
  explicit Writer(std::ofstream& out) : out_(out) {}
  template <typename T>
  void pod(const T& v) {
    out_.write(reinterpret_cast<const char*>(&v), sizeof(T));
  }
  void str(const std::string& s) {
    pod<std::uint64_t>(s.size());
    out_.write(s.data(), static_cast<std::streamsize>(s.size()));
  }
  void matrix(const Matrix& m) {
    pod<std::uint64_t>(m.rows());
    pod<std::uint64_t>(m.cols());
    out_.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
  }

 private:
  std::ofstream& out_;
};

class Reader {
 public:
  Reader(std::ifstream& in, std::string path) : in_(in), path_(std::move(path)) {}
  template <typename T>
  T pod() {
    T v{};
    in_.read(reinterpret_cast<char*>(&v), sizeof(T));
    check();
    return v;
  }
  std::string str() {
    const auto n = pod<std::uint64_t>();
    guard(n);
    std::string s(n, '\0');
    in_.read(s.data(), static_cast<std::streamsize>(n));
    check();
    return s;
  }
  Matrix matrix() {
    const auto r = pod<std::uint64_t>();
    const auto c = pod<std::uint64_t>();
    guard(r * c * sizeof(double));
    Matrix m(r, c);
    in_.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
    check();
    return m;
  }

 private:
  void check() {
    if (!in_) throw DataError(path_ + ": truncated checkpoint");
  }
  void guard(std::uint64_t bytes) {
    if (bytes > (std::uint64_t{1} << 34)) throw DataError(path_ + ": corrupt checkpoint (implausible size)");
  }
  std::ifstream& in_;
  std::string path_;
};

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open " + tmp.string() + " for writing");
    Writer w(out);
    out.write(kMagic.data(), kMagic.size());
    w.pod(Checkpoint::kVersion);
    w.str(ckpt.config_json);
    w.pod<std::int64_t>(ckpt.epoch);
    w.pod(ckpt.eta);
    w.pod<std::uint64_t>(ckpt.alive.size());
    for (std::uint8_t a : ckpt.alive) w.pod(a);
    w.pod<std::uint64_t>(ckpt.importance.size());
    for (double v : ckpt.importance) w.pod(v);
    w.pod<std::uint64_t>(ckpt.params.size());
    for (const auto& [name, m] : ckpt.params) {
      w.str(name);
      w.matrix(m);
    }
    w.pod<std::uint64_t>(ckpt.optimizer.size());
    for (const auto& [name, slot] : ckpt.optimizer) {
      w.str(name);
      w.pod<std::int64_t>(slot.step);
      w.matrix(slot.m);
      w.matrix(slot.v);
    }
    out.flush();
    if (!out) throw DataError("failed writing " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  std::array<char, 8> magic{};
  in.read(magic.data(), magic.size());
  if (!in || magic != kMagic) throw DataError(path.string() + ": not a checkpoint file");
  Reader r(in, path.string());
  const auto version = r.pod<std::uint32_t>();
  if (version != Checkpoint::kVersion)
    throw DataError(path.string() + ": unsupported checkpoint version " + std::to_string(version));
  Checkpoint c;
  c.config_json = r.str();
  c.epoch = r.pod<std::int64_t>();
  c.eta = r.pod<double>();
  c.alive.resize(r.pod<std::uint64_t>());
  for (auto& a : c.alive) a = r.pod<std::uint8_t>();
  c.importance.resize(r.pod<std::uint64_t>());
  for (auto& v : c.importance) v = r.pod<double>();
  const auto np = r.pod<std::uint64_t>();
  for (std::uint64_t i = 0; i < np; ++i) {
    std::string name = r.str();
    c.params.emplace(std::move(name), r.matrix());
  }
  const auto no = r.pod<std::uint64_t>();
  for (std::uint64_t i = 0; i < no; ++i) {
    std::string name = r.str();
    ad::AdamSlot slot;
    slot.step = r.pod<std::int64_t>();
    slot.m = r.matrix();
    slot.v = r.matrix();
    c.optimizer.emplace(std::move(name), std::move(slot));
  }
  return c;
}

}  // namespace sagmm
