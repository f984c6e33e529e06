#pragma once

// Checkpoint file layout:
//   bytes 0..3   magic "HPO1"
//   bytes 4..11  metadata length, uint64 little-endian
//   metadata     UTF-8 JSON: config_hash, seed, epoch, kind, extra, manifest
//   payload      raw little-endian IEEE-754 arrays at the manifest offsets
//                (relative to the payload start)

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "json.hpp"

#include "hippo/dataio/records.hpp"
#include "hippo/numcore/params.hpp"

namespace hippo {

enum class CheckpointErrc {
  kIo = 1,
  kMagicMismatch,
  kTruncated,
  kManifestMismatch,
  kConfigMismatch,
};

inline const char* to_string(CheckpointErrc c) {
  switch (c) {
    case CheckpointErrc::kIo:
      return "io";
    case CheckpointErrc::kMagicMismatch:
      return "magic_mismatch";
    case CheckpointErrc::kTruncated:
      return "truncated";
    case CheckpointErrc::kManifestMismatch:
      return "manifest_mismatch";
    case CheckpointErrc::kConfigMismatch:
      return "config_mismatch";
  }
  return "unknown";
}

class CheckpointError : public Error {
 public:
  CheckpointError(CheckpointErrc code, const std::string& what)
      : Error(std::string("checkpoint ") + to_string(code) + ": " + what), code_(code) {}
  CheckpointErrc code() const noexcept { return code_; }

 private:
  CheckpointErrc code_;
};

template <typename Real>
struct ModelState {
  std::string config_hash;
  std::uint64_t seed = 0;
  std::int64_t epoch = 0;
  std::string kind;  // "pretrain" or "ppi"
  nlohmann::json extra = nlohmann::json::object();
  ParamSet<Real> tensors;
};

namespace detail {

inline constexpr char kMagic[4] = {'H', 'P', 'O', '1'};

template <typename T>
void put_le(std::string& out, T v) {
  static_assert(std::is_trivially_copyable_v<T>);
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  out.append(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
T get_le(const char* p) {
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, p, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  T v;
  std::memcpy(&v, bytes, sizeof(T));
  return v;
}

template <typename Real>
constexpr const char* dtype_name() {
  return sizeof(Real) == 8 ? "f64" : "f32";
}

}  // namespace detail

template <typename Real>
std::string serialize_checkpoint(const ModelState<Real>& state) {
  nlohmann::json meta;
  meta["config_hash"] = state.config_hash;
  meta["seed"] = state.seed;
  meta["epoch"] = state.epoch;
  meta["kind"] = state.kind;
  meta["extra"] = state.extra;
  nlohmann::json manifest = nlohmann::json::array();
  std::string payload;
  for (std::size_t i = 0; i < state.tensors.size(); ++i) {
    const auto& t = state.tensors[i];
    t.check_finite("save_checkpoint " + state.tensors.name(i));
    manifest.push_back({{"name", state.tensors.name(i)},
                        {"shape", t.shape()},
                        {"dtype", detail::dtype_name<Real>()},
                        {"offset", payload.size()},
                        {"bytes", t.size() * sizeof(Real)}});
    for (Real v : t.data()) detail::put_le(payload, v);
  }
  meta["manifest"] = std::move(manifest);
  const std::string meta_text = meta.dump();
  std::string out(detail::kMagic, 4);
  detail::put_le<std::uint64_t>(out, meta_text.size());
  out += meta_text;
  out += payload;
  return out;
}

template <typename Real>
void save_checkpoint(const ModelState<Real>& state, const std::string& path) {
  try {
    io::write_file(path, serialize_checkpoint(state));
  } catch (const IoError& e) {
    throw CheckpointError(CheckpointErrc::kIo, e.what());
  }
}

// Parses checkpoint bytes. When `expected_config_hash` is non-empty it must
// equal the stored hash. Tensors stored in another precision are converted.
template <typename Real>
ModelState<Real> deserialize_checkpoint(const std::string& bytes, const std::string& expected_config_hash = {}) {
  using Errc = CheckpointErrc;
  if (bytes.size() < 4) throw CheckpointError(Errc::kTruncated, "file shorter than the magic tag");
  if (std::memcmp(bytes.data(), detail::kMagic, 4) != 0)
    throw CheckpointError(Errc::kMagicMismatch, "expected 'HPO1', found '" + bytes.substr(0, 4) + "'");
  if (bytes.size() < 12) throw CheckpointError(Errc::kTruncated, "missing metadata length");
  const auto meta_len = detail::get_le<std::uint64_t>(bytes.data() + 4);
  if (meta_len > bytes.size() - 12) throw CheckpointError(Errc::kTruncated, "metadata extends past end of file");
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(bytes.substr(12, meta_len));
  } catch (const std::exception& e) {
    throw CheckpointError(Errc::kManifestMismatch, std::string("invalid metadata JSON: ") + e.what());
  }
  const std::size_t payload_start = 12 + meta_len;
  const std::size_t payload_size = bytes.size() - payload_start;

  ModelState<Real> state;
  try {
    state.config_hash = meta.at("config_hash").get<std::string>();
    state.seed = meta.at("seed").get<std::uint64_t>();
    state.epoch = meta.at("epoch").get<std::int64_t>();
    state.kind = meta.value("kind", std::string());
    state.extra = meta.value("extra", nlohmann::json::object());
  } catch (const std::exception& e) {
    throw CheckpointError(Errc::kManifestMismatch, std::string("incomplete metadata: ") + e.what());
  }
  if (!expected_config_hash.empty() && expected_config_hash != state.config_hash)
    throw CheckpointError(Errc::kConfigMismatch,
                          "checkpoint config hash " + state.config_hash + " != expected " + expected_config_hash);

  std::vector<std::pair<std::size_t, std::size_t>> ranges;
  try {
    for (const auto& entry : meta.at("manifest")) {
      const auto name = entry.at("name").get<std::string>();
      const auto shape = entry.at("shape").get<Shape>();
      const auto dtype = entry.at("dtype").get<std::string>();
      const auto offset = entry.at("offset").get<std::size_t>();
      const auto nbytes = entry.at("bytes").get<std::size_t>();
      const std::size_t width = dtype == "f64" ? 8 : dtype == "f32" ? 4 : 0;
      if (width == 0) throw CheckpointError(Errc::kManifestMismatch, "unknown dtype '" + dtype + "' for " + name);
      std::size_t numel = 0;
      try {
        numel = shape_numel(shape);
      } catch (const ShapeError& e) {
        throw CheckpointError(Errc::kManifestMismatch, name + ": " + e.what());
      }
      if (numel * width != nbytes)
        throw CheckpointError(Errc::kManifestMismatch, name + ": shape " + shape_string(shape) + " needs " +
                                                           std::to_string(numel * width) + " bytes, manifest says " +
                                                           std::to_string(nbytes));
      if (offset > payload_size || nbytes > payload_size - offset)
        throw CheckpointError(Errc::kTruncated, name + ": payload range past end of file");
      ranges.emplace_back(offset, offset + nbytes);
      std::vector<Real> values(numel);
      const char* base = bytes.data() + payload_start + offset;
      for (std::size_t k = 0; k < numel; ++k)
        values[k] = width == 8 ? Real(detail::get_le<double>(base + 8 * k)) : Real(detail::get_le<float>(base + 4 * k));
      state.tensors.add(name, BasicTensor<Real>(shape, std::move(values)));
    }
  } catch (const CheckpointError&) {
    throw;
  } catch (const std::exception& e) {
    throw CheckpointError(Errc::kManifestMismatch, std::string("invalid manifest: ") + e.what());
  }
  std::sort(ranges.begin(), ranges.end());
  for (std::size_t i = 1; i < ranges.size(); ++i)
    if (ranges[i].first < ranges[i - 1].second) throw CheckpointError(Errc::kManifestMismatch, "overlapping tensor ranges");
  return state;
}

template <typename Real>
ModelState<Real> load_checkpoint(const std::string& path, const std::string& expected_config_hash = {}) {
  std::string bytes;
  try {
    bytes = io::read_file(path);
  } catch (const IoError& e) {
    throw CheckpointError(CheckpointErrc::kIo, e.what());
  }
  return deserialize_checkpoint<Real>(bytes, expected_config_hash);
}

}  // namespace hippo
