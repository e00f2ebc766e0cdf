#pragma once

#include <json.hpp>

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include "dexined/error.hpp"
#include "dexined/hash.hpp"
#include "dexined/image.hpp"
#include "dexined/model.hpp"
#include "dexined/optim.hpp"

namespace dexined {

// Binary checkpoint container, all integers little-endian:
//
//   "DEXICKPT" | u32 version | u32 scalar bytes (4 or 8)
//   u64 n, n bytes of JSON metadata (configs, seed, epoch, history, ...)
//   u64 params, then per parameter: name, u64[4] NCHW shape, raw scalars
//   u64 bn layers, then per layer: name, u64 channels, u64 batches tracked,
//       running mean, running variance
//   u8 has_optimizer; if set: u64 adam step, then m and v per parameter
//   40 hex chars: SHA-1 of everything before it
//
// Strings are u64 length + bytes. Loading checks every name and shape
// against the rebuilt model.
inline constexpr char kCheckpointMagic[8] = {'D', 'E', 'X', 'I', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

class ByteWriter {
 public:
  void raw(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    bytes.insert(bytes.end(), b, b + n);
  }
  template <class U>
  void le(U v) {
    for (std::size_t i = 0; i < sizeof(U); ++i) bytes.push_back(std::uint8_t(std::uint64_t(v) >> (8 * i)));
  }
  void str(const std::string& s) {
    le<std::uint64_t>(s.size());
    raw(s.data(), s.size());
  }
  template <class T>
  void scalars(std::span<const T> v) {
    for (T x : v) {
      if constexpr (sizeof(T) == 4) {
        std::uint32_t u;
        std::memcpy(&u, &x, 4);
        le(u);
      } else {
        std::uint64_t u;
        std::memcpy(&u, &x, 8);
        le(u);
      }
    }
  }
  std::vector<std::uint8_t> bytes;
};

class ByteReader {
 public:
  ByteReader(const std::vector<std::uint8_t>& b, std::string label)
      : bytes_(b), label_(std::move(label)) {}
  void need(std::size_t n) {
    if (pos_ + n > bytes_.size()) throw DataError(label_ + ": checkpoint is truncated");
  }
  template <class U>
  U le() {
    need(sizeof(U));
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= std::uint64_t(bytes_[pos_ + i]) << (8 * i);
    pos_ += sizeof(U);
    return U(v);
  }
  std::string str() {
    const auto n = le<std::uint64_t>();
    need(n);
    std::string s(bytes_.begin() + std::ptrdiff_t(pos_), bytes_.begin() + std::ptrdiff_t(pos_ + n));
    pos_ += n;
    return s;
  }
  // Reads n stored scalars of the given width into T.
  template <class T>
  void scalars(std::span<T> out, std::uint32_t width) {
    for (auto& x : out) {
      if (width == 4) {
        const auto u = le<std::uint32_t>();
        float f;
        std::memcpy(&f, &u, 4);
        x = static_cast<T>(f);
      } else {
        const auto u = le<std::uint64_t>();
        double d;
        std::memcpy(&d, &u, 8);
        x = static_cast<T>(d);
      }
    }
  }
  std::size_t pos() const { return pos_; }

 private:
  const std::vector<std::uint8_t>& bytes_;
  std::string label_;
  std::size_t pos_ = 0;
};

inline std::vector<std::uint8_t> verified_payload(const std::filesystem::path& path) {
  auto bytes = read_bytes(path);
  if (bytes.size() < 8 + 40 || std::memcmp(bytes.data(), kCheckpointMagic, 8) != 0)
    throw DataError("'" + path.string() + "' is not a checkpoint");
  const std::string stored(bytes.end() - 40, bytes.end());
  bytes.resize(bytes.size() - 40);
  if (sha1_hex(bytes.data(), bytes.size()) != stored)
    throw DataError("'" + path.string() + "': checkpoint checksum mismatch");
  return bytes;
}

}  // namespace detail

template <class T>
void save_checkpoint(const std::filesystem::path& path, const DexiNed<T>& model,
                     const AdamState<T>* adam, const nlohmann::json& meta) {
  detail::ByteWriter w;
  w.raw(kCheckpointMagic, 8);
  w.le<std::uint32_t>(kCheckpointVersion);
  w.le<std::uint32_t>(sizeof(T));
  w.str(meta.dump());
  const auto& params = model.store().params();
  w.le<std::uint64_t>(params.size());
  for (const auto& p : params) {
    w.str(p.name);
    const Shape s = p.tensor.shape();
    for (std::size_t d : {s.n, s.c, s.h, s.w}) w.le<std::uint64_t>(d);
    w.scalars<T>(p.tensor.data());
  }
  const auto& stats = model.store().bn_stats();
  w.le<std::uint64_t>(stats.size());
  for (std::size_t i = 0; i < stats.size(); ++i) {
    w.str(model.store().bn_names()[i]);
    w.le<std::uint64_t>(stats[i].running_mean.numel());
    w.le<std::uint64_t>(stats[i].batches_tracked);
    w.scalars<T>(stats[i].running_mean.data());
    w.scalars<T>(stats[i].running_var.data());
  }
  w.le<std::uint8_t>(adam && !adam->m.empty() ? 1 : 0);
  if (adam && !adam->m.empty()) {
    w.le<std::uint64_t>(adam->step);
    for (std::size_t i = 0; i < params.size(); ++i) {
      w.scalars<T>(std::span<const T>(adam->m[i]));
      w.scalars<T>(std::span<const T>(adam->v[i]));
    }
  }
  const std::string digest = sha1_hex(w.bytes.data(), w.bytes.size());
  w.raw(digest.data(), digest.size());
  write_bytes_atomic(path, w.bytes.data(), w.bytes.size());
}

// Metadata only, e.g. to rebuild the model before load_checkpoint.
inline nlohmann::json read_checkpoint_meta(const std::filesystem::path& path) {
  const auto bytes = detail::verified_payload(path);
  detail::ByteReader r(bytes, path.string());
  r.need(8);
  for (int i = 0; i < 8; ++i) r.le<std::uint8_t>();
  if (r.le<std::uint32_t>() != kCheckpointVersion)
    throw DataError("'" + path.string() + "': unsupported checkpoint version");
  r.le<std::uint32_t>();
  try {
    return nlohmann::json::parse(r.str());
  } catch (const nlohmann::json::exception&) {
    throw DataError("'" + path.string() + "': corrupt checkpoint metadata");
  }
}

// Restores parameters, batch-norm statistics and (when present and asked
// for) the optimizer state into an already built model. Returns the metadata.
template <class T>
nlohmann::json load_checkpoint(const std::filesystem::path& path, DexiNed<T>& model,
                               AdamState<T>* adam = nullptr) {
  const auto bytes = detail::verified_payload(path);
  const std::string label = "'" + path.string() + "'";
  detail::ByteReader r(bytes, path.string());
  for (int i = 0; i < 8; ++i) r.le<std::uint8_t>();
  if (r.le<std::uint32_t>() != kCheckpointVersion)
    throw DataError(label + ": unsupported checkpoint version");
  const auto width = r.le<std::uint32_t>();
  if (width != 4 && width != 8) throw DataError(label + ": bad scalar width");
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(r.str());
  } catch (const nlohmann::json::exception&) {
    throw DataError(label + ": corrupt checkpoint metadata");
  }
  auto& params = model.store().params();
  const auto n_params = r.le<std::uint64_t>();
  if (n_params != params.size())
    throw DataError(label + ": checkpoint has " + std::to_string(n_params) +
                    " parameters, model has " + std::to_string(params.size()));
  for (auto& p : params) {
    const std::string name = r.str();
    Shape s;
    s.n = r.le<std::uint64_t>();
    s.c = r.le<std::uint64_t>();
    s.h = r.le<std::uint64_t>();
    s.w = r.le<std::uint64_t>();
    if (name != p.name || !(s == p.tensor.shape()))
      throw DataError(label + ": checkpoint parameter '" + name + "' " + s.str() +
                      " does not match model parameter '" + p.name + "' " +
                      p.tensor.shape().str());
    r.scalars<T>(p.tensor.data(), width);
  }
  auto& stats = model.store().bn_stats();
  const auto n_bn = r.le<std::uint64_t>();
  if (n_bn != stats.size()) throw DataError(label + ": batch-norm layer count mismatch");
  for (std::size_t i = 0; i < stats.size(); ++i) {
    const std::string name = r.str();
    const auto channels = r.le<std::uint64_t>();
    if (name != model.store().bn_names()[i] || channels != stats[i].running_mean.numel())
      throw DataError(label + ": batch-norm statistics '" + name + "' do not match the model");
    stats[i].batches_tracked = r.le<std::uint64_t>();
    r.scalars<T>(stats[i].running_mean.data(), width);
    r.scalars<T>(stats[i].running_var.data(), width);
  }
  const bool has_adam = r.le<std::uint8_t>() != 0;
  if (adam) {
    adam->m.clear();
    adam->v.clear();
    adam->step = 0;
    if (has_adam) {
      adam->step = r.le<std::uint64_t>();
      adam->resize_for(params);
      for (std::size_t i = 0; i < params.size(); ++i) {
        r.scalars<T>(std::span<T>(adam->m[i]), width);
        r.scalars<T>(std::span<T>(adam->v[i]), width);
      }
    }
  }
  return meta;
}

}  // namespace dexined
