// SPDX-License-Identifier: Apache-2.0
#include "geomgcl/checkpoint.hpp"

#include <bit>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "geomgcl/error.hpp"

namespace geomgcl {

namespace {

constexpr char kMagic[4] = {'G', 'G', 'C', 'L'};

template <typename T>
void put(std::string& out, T v) {
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((static_cast<std::uint64_t>(v) >> (8 * i)) & 0xff));
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  template <typename T>
  T get(const char* what) {
    need(sizeof(T), what);
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += sizeof(T);
    return static_cast<T>(v);
  }

  std::string_view take(std::size_t n, const char* what) {
    need(n, what);
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  void need(std::size_t n, const char* what) const {
    if (bytes_.size() - pos_ < n) {
      throw CheckpointError("truncated checkpoint while reading " + std::string(what) + ": expected " +
                            std::to_string(pos_ + n) + " bytes, found " + std::to_string(bytes_.size()));
    }
  }

  std::size_t remaining() const { return bytes_.size() - pos_; }
  std::size_t position() const { return pos_; }

 private:
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string encode_checkpoint(const ParameterStore& params, std::uint64_t fingerprint) {
  std::string out(kMagic, 4);
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint64_t>(out, fingerprint);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(params.size()));
  for (const auto& [name, t] : params) {
    if (name.size() > std::numeric_limits<std::uint16_t>::max()) throw CheckpointError("tensor name too long: " + name);
    put<std::uint16_t>(out, static_cast<std::uint16_t>(name.size()));
    out += name;
    put<std::uint8_t>(out, static_cast<std::uint8_t>(t.rank()));
    for (std::size_t d : t.shape()) put<std::uint32_t>(out, static_cast<std::uint32_t>(d));
    for (double v : t.data()) put<std::uint32_t>(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  }
  return out;
}

Checkpoint decode_checkpoint(std::string_view bytes) {
  Reader r(bytes);
  if (r.remaining() < 4 || r.take(4, "magic") != std::string_view(kMagic, 4)) throw CheckpointError("bad magic");
  Checkpoint ck;
  ck.version = r.get<std::uint32_t>("version");
  if (ck.version != kCheckpointVersion) {
    throw CheckpointError("unsupported checkpoint version " + std::to_string(ck.version));
  }
  ck.fingerprint = r.get<std::uint64_t>("fingerprint");
  const auto count = r.get<std::uint32_t>("tensor count");
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = r.get<std::uint16_t>("name length");
    std::string name(r.take(len, "tensor name"));
    const auto rank = r.get<std::uint8_t>("rank");
    if (rank == 0 || rank > 2) throw CheckpointError("tensor '" + name + "' has unsupported rank " + std::to_string(rank));
    std::vector<std::size_t> shape;
    std::size_t total = 1;
    for (std::uint8_t d = 0; d < rank; ++d) {
      shape.push_back(r.get<std::uint32_t>("dims"));
      total *= shape.back();
    }
    r.need(total * 4, "tensor data");
    std::vector<double> data(total);
    for (double& v : data) v = static_cast<double>(std::bit_cast<float>(r.get<std::uint32_t>("tensor data")));
    if (ck.params.contains(name)) throw CheckpointError("duplicate tensor '" + name + "'");
    ck.params.set(name, Tensor(std::move(shape), std::move(data)));
  }
  if (r.remaining() != 0) {
    throw CheckpointError("trailing bytes after checkpoint: expected " + std::to_string(r.position()) +
                          " bytes, found " + std::to_string(bytes.size()));
  }
  return ck;
}

void save_checkpoint(const ParameterStore& params, std::uint64_t fingerprint, const std::filesystem::path& path) {
  const std::string bytes = encode_checkpoint(params, fingerprint);
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("cannot write '" + tmp.string() + "'");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw CheckpointError("write failed for '" + tmp.string() + "'");
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path, std::optional<std::uint64_t> expected_fingerprint) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  Checkpoint ck = decode_checkpoint(buf.str());
  if (expected_fingerprint && *expected_fingerprint != ck.fingerprint) {
    char msg[160];
    std::snprintf(msg, sizeof(msg), "fingerprint mismatch: checkpoint %016llx, configuration %016llx",
                  static_cast<unsigned long long>(ck.fingerprint), static_cast<unsigned long long>(*expected_fingerprint));
    throw CheckpointError(msg);
  }
  return ck;
}

ParameterStore round_to_float(const ParameterStore& params) {
  ParameterStore out = params;
  for (auto& [_, t] : out)
    for (double& v : t.data()) v = static_cast<double>(static_cast<float>(v));
  return out;
}

}  // namespace geomgcl
