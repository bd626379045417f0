// Copyright 2026 The confhyena Authors
// Licensed under the Apache License, Version 2.0

// Layout (little-endian):
//   "CHYNCKPT" | u32 version | u64 config hash | u64 entry count
//   per entry: u32 name length | name | u8 trainable | u32 rank | u64 dims[rank]
//              | f64 values[numel]

#include <bit>
#include <cstring>
#include <fstream>
#include <string>

#include "confhyena/encoder/model.hpp"
#include "confhyena/numerics/errors.hpp"

namespace confhyena {

static_assert(std::endian::native == std::endian::little, "checkpoints assume a little-endian host");

namespace {

constexpr char kMagic[8] = {'C', 'H', 'Y', 'N', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::ofstream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

class Reader {
 public:
  explicit Reader(std::ifstream& in) : in_(in) {}

  template <typename T>
  T get() {
    T v{};
    read(&v, sizeof(T));
    return v;
  }

  void read(void* dst, std::size_t n) {
    in_.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n) {
      throw ParseError(block_, "checkpoint truncated");
    }
  }

  // Reports the 1-based entry index as the error location.
  void set_block(std::size_t b) { block_ = b; }

 private:
  std::ifstream& in_;
  std::size_t block_ = 0;
};

}  // namespace

void save_checkpoint(const SpeechModel& model, const std::string& path) {
  const ParamStore& store = model.params();
  if (!store.materialized()) throw ContractError("save_checkpoint: model has no weights");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write checkpoint " + path);
  out.write(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, kVersion);
  put<std::uint64_t>(out, model.config().hash());
  put<std::uint64_t>(out, store.entries().size());
  for (const auto& e : store.entries()) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(e.name.size()));
    out.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
    put<std::uint8_t>(out, e.trainable ? 1 : 0);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(e.shape.size()));
    for (std::size_t d : e.shape) put<std::uint64_t>(out, d);
    auto data = e.value.data();
    out.write(reinterpret_cast<const char*>(data.data()),
              static_cast<std::streamsize>(data.size() * sizeof(double)));
  }
  if (!out) throw ConfigError("failed writing checkpoint " + path);
}

void load_checkpoint(SpeechModel& model, const std::string& path) {
  ParamStore& store = model.params();
  if (!store.materialized()) throw ContractError("load_checkpoint: materialize the model first");
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open checkpoint " + path);
  Reader r(in);
  char magic[8];
  r.read(magic, sizeof(magic));
  if (std::memcmp(magic, kMagic, sizeof(magic)) != 0) throw ParseError(0, "not a checkpoint file");
  const auto version = r.get<std::uint32_t>();
  if (version != kVersion) {
    throw ParseError(0, "unsupported checkpoint version " + std::to_string(version));
  }
  if (r.get<std::uint64_t>() != model.config().hash()) {
    throw ConfigError("checkpoint was written for a different config");
  }
  const auto count = r.get<std::uint64_t>();
  auto& entries = store.entries();
  if (count != entries.size()) {
    throw ConfigError("checkpoint holds " + std::to_string(count) + " blocks, model has " +
                      std::to_string(entries.size()));
  }
  for (std::size_t i = 0; i < entries.size(); ++i) {
    r.set_block(i + 1);
    auto& e = entries[i];
    std::string name(r.get<std::uint32_t>(), '\0');
    r.read(name.data(), name.size());
    if (name != e.name) throw ConfigError("checkpoint block '" + name + "' where '" + e.name + "' expected");
    r.get<std::uint8_t>();
    Shape shape(r.get<std::uint32_t>());
    for (auto& d : shape) d = r.get<std::uint64_t>();
    if (shape != e.shape) {
      throw ConfigError("checkpoint block '" + name + "' has shape " + shape_str(shape));
    }
    auto dst = e.value.mutable_data();
    r.read(dst.data(), dst.size() * sizeof(double));
  }
}

}  // namespace confhyena
