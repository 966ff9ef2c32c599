// Copyright 2026 The lptm-kit Authors.
// SPDX-License-Identifier: Apache-2.0

#include "lptm/checkpoint.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace lptm {

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

constexpr char kMagic[8] = {'L', 'P', 'T', 'M', 'C', 'K', 'P', 'T'};
constexpr std::size_t kPrefix = 16;  // magic, version, crc

class Writer {
 public:
  template <typename T>
  void put(T v) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
    bytes_.insert(bytes_.end(), p, p + sizeof(T));
  }
  void put_bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    bytes_.insert(bytes_.end(), p, p + n);
  }
  std::vector<std::uint8_t>& bytes() { return bytes_; }

 private:
  std::vector<std::uint8_t> bytes_;
};

class Reader {
 public:
  Reader(const std::vector<std::uint8_t>& bytes, std::size_t at) : bytes_(bytes), at_(at) {}

  template <typename T>
  T get() {
    T v;
    std::memcpy(&v, take(sizeof(T)), sizeof(T));
    return v;
  }
  const std::uint8_t* take(std::size_t n) {
    if (n > bytes_.size() - at_) throw CheckpointError("checkpoint is truncated");
    const std::uint8_t* p = bytes_.data() + at_;
    at_ += n;
    return p;
  }
  bool done() const { return at_ == bytes_.size(); }

 private:
  const std::vector<std::uint8_t>& bytes_;
  std::size_t at_;
};

std::uint32_t crc_of(const std::uint8_t* data, std::size_t n) {
  uLong crc = crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed large payloads in chunks.
  while (n > 0) {
    const std::size_t chunk = std::min<std::size_t>(n, 1u << 30);
    crc = crc32(crc, data, static_cast<uInt>(chunk));
    data += chunk;
    n -= chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

nlohmann::json verified_header(const std::vector<std::uint8_t>& bytes, Reader& reader) {
  if (bytes.size() < kPrefix + 8 || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw CheckpointError("not a checkpoint file (bad magic)");
  }
  Reader prefix(bytes, sizeof(kMagic));
  const auto version = prefix.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  }
  const auto stored = prefix.get<std::uint32_t>();
  const std::uint32_t actual = crc_of(bytes.data() + kPrefix, bytes.size() - kPrefix);
  if (stored != actual) throw ChecksumError("checkpoint checksum mismatch (file is corrupt)");
  const auto header_len = reader.get<std::uint64_t>();
  const auto* text = reinterpret_cast<const char*>(reader.take(header_len));
  try {
    return nlohmann::json::parse(text, text + header_len);
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("checkpoint header: ") + e.what());
  }
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint '" + path.string() + "'");
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

}  // namespace

std::vector<std::uint8_t> serialize_checkpoint(Model& model, const nlohmann::json& meta) {
  nlohmann::json heads = nlohmann::json::object();
  if (model.forecast_head) heads["forecast_horizon"] = model.forecast_head->horizon();
  if (model.classify_head) heads["num_classes"] = model.classify_head->num_classes();
  const nlohmann::json header = {
      {"format", "lptm-checkpoint"},
      {"model", to_json(model.config)},
      {"domains", model.domains()},
      {"seed", model.seed},
      {"step", model.step},
      {"heads", heads},
      {"meta", meta},
  };
  const std::string text = header.dump();

  Writer w;
  w.put_bytes(kMagic, sizeof(kMagic));
  w.put(kCheckpointVersion);
  w.put(std::uint32_t{0});
  w.put(static_cast<std::uint64_t>(text.size()));
  w.put_bytes(text.data(), text.size());
  std::uint32_t count = 0;
  model.visit([&](const std::string&, Param<Real>&) { ++count; });
  w.put(count);
  model.visit([&](const std::string& name, Param<Real>& p) {
    w.put(static_cast<std::uint32_t>(name.size()));
    w.put_bytes(name.data(), name.size());
    w.put(std::uint32_t{2});
    w.put(static_cast<std::uint64_t>(p.value.rows()));
    w.put(static_cast<std::uint64_t>(p.value.cols()));
    for (Eigen::Index r = 0; r < p.value.rows(); ++r) {
      for (Eigen::Index c = 0; c < p.value.cols(); ++c) w.put(static_cast<float>(p.value(r, c)));
    }
  });
  std::vector<std::uint8_t>& bytes = w.bytes();
  const std::uint32_t crc = crc_of(bytes.data() + kPrefix, bytes.size() - kPrefix);
  std::memcpy(bytes.data() + 12, &crc, sizeof(crc));
  return std::move(bytes);
}

Model deserialize_checkpoint(const std::vector<std::uint8_t>& bytes) {
  Reader reader(bytes, kPrefix);
  const nlohmann::json header = verified_header(bytes, reader);
  ModelConfig config;
  std::vector<std::string> domains;
  std::uint64_t seed = 0;
  std::int64_t step = 0;
  try {
    config = model_config_from_json(header.at("model"));
    domains = header.at("domains").get<std::vector<std::string>>();
    seed = header.at("seed").get<std::uint64_t>();
    step = header.at("step").get<std::int64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("checkpoint header: ") + e.what());
  }
  Model model(std::move(config), std::move(domains), seed);
  model.step = step;
  const nlohmann::json& heads = header.at("heads");
  if (heads.contains("forecast_horizon")) model.ensure_forecast_head(heads["forecast_horizon"].get<int>());
  if (heads.contains("num_classes")) model.ensure_classify_head(heads["num_classes"].get<int>());

  const auto count = reader.get<std::uint32_t>();
  std::uint32_t seen = 0;
  model.visit([&](const std::string& name, Param<Real>& p) {
    if (seen++ >= count) throw CheckpointError("checkpoint is missing tensor '" + name + "'");
    const auto name_len = reader.get<std::uint32_t>();
    const auto* stored = reinterpret_cast<const char*>(reader.take(name_len));
    if (std::string(stored, name_len) != name) {
      throw CheckpointError("checkpoint tensor '" + std::string(stored, name_len) + "' where '" + name + "' was expected");
    }
    if (reader.get<std::uint32_t>() != 2) throw CheckpointError("tensor '" + name + "' is not rank 2");
    const auto rows = reader.get<std::uint64_t>();
    const auto cols = reader.get<std::uint64_t>();
    if (rows != static_cast<std::uint64_t>(p.value.rows()) || cols != static_cast<std::uint64_t>(p.value.cols())) {
      throw CheckpointError("tensor '" + name + "' has shape " + std::to_string(rows) + "x" + std::to_string(cols) +
                           ", expected " + std::to_string(p.value.rows()) + "x" + std::to_string(p.value.cols()));
    }
    for (Eigen::Index r = 0; r < p.value.rows(); ++r) {
      for (Eigen::Index c = 0; c < p.value.cols(); ++c) p.value(r, c) = static_cast<Real>(reader.get<float>());
    }
  });
  if (seen != count || !reader.done()) throw CheckpointError("checkpoint has unexpected trailing tensors");
  return model;
}

void save_checkpoint(Model& model, const std::filesystem::path& path, const nlohmann::json& meta) {
  const std::vector<std::uint8_t> bytes = serialize_checkpoint(model, meta);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("cannot write checkpoint '" + path.string() + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw CheckpointError("short write to checkpoint '" + path.string() + "'");
}

Model load_checkpoint(const std::filesystem::path& path) { return deserialize_checkpoint(read_file(path)); }

nlohmann::json read_checkpoint_header(const std::filesystem::path& path) {
  const std::vector<std::uint8_t> bytes = read_file(path);
  Reader reader(bytes, kPrefix);
  return verified_header(bytes, reader);
}

}  // namespace lptm
