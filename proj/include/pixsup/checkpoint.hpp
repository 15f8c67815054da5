// Copyright 2026 The pixsup Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Checkpoint container. A text header followed by the raw payload:
//
//   pixsup-checkpoint
//   version 1
//   config {...single-line JSON training config...}
//   tensors <count>
//   <name> f32 <rank> <dim0> ... <dimR-1>      (one line per tensor)
//   end
//   <payload: little-endian float32 values of every tensor, header order>
//
// Tensors: main.<param>, support.<param>, bank.vectors, bank.valid (0/1)
// and bank.last_update (-1 for never).

#ifndef PIXSUP_CHECKPOINT_HPP
#define PIXSUP_CHECKPOINT_HPP

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "pixsup/config.hpp"
#include "pixsup/params.hpp"
#include "pixsup/rcm.hpp"

namespace pixsup {

inline constexpr int kCheckpointVersion = 1;
inline constexpr const char* kCheckpointMagic = "pixsup-checkpoint";

struct Checkpoint {
  TrainConfig config;
  EmaPair<float> pair;
  PrototypeBank<float> bank;
};

namespace detail {

inline void put_f32(std::ostream& os, float v) {
  std::uint32_t bits = std::bit_cast<std::uint32_t>(v);
  unsigned char b[4] = {static_cast<unsigned char>(bits), static_cast<unsigned char>(bits >> 8),
                        static_cast<unsigned char>(bits >> 16), static_cast<unsigned char>(bits >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

inline float get_f32(const unsigned char* b) {
  const std::uint32_t bits = static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
                             (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
  return std::bit_cast<float>(bits);
}

struct NamedTensor {
  std::string name;
  Tensor<float> value;
};

inline std::vector<NamedTensor> checkpoint_tensors(const Checkpoint& ck) {
  std::vector<NamedTensor> out;
  for (const auto& e : ck.pair.main.entries()) out.push_back({"main." + e.name, e.value});
  for (const auto& e : ck.pair.support.entries()) out.push_back({"support." + e.name, e.value});
  out.push_back({"bank.vectors", ck.bank.vectors});
  const int classes = ck.bank.classes();
  Tensor<float> valid({classes}), last({classes});
  for (int k = 0; k < classes; ++k) {
    valid[static_cast<std::size_t>(k)] = ck.bank.valid[static_cast<std::size_t>(k)] ? 1.f : 0.f;
    last[static_cast<std::size_t>(k)] = static_cast<float>(ck.bank.last_update[static_cast<std::size_t>(k)]);
  }
  out.push_back({"bank.valid", valid});
  out.push_back({"bank.last_update", last});
  return out;
}

[[noreturn]] inline void bad_field(const std::string& field, const std::string& detail) {
  throw FormatError("checkpoint header field '" + field + "': " + detail);
}

}  // namespace detail

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open '" + path.string() + "' for writing");
  const auto tensors = detail::checkpoint_tensors(ck);
  f << kCheckpointMagic << '\n';
  f << "version " << kCheckpointVersion << '\n';
  f << "config " << to_json(ck.config).dump() << '\n';
  f << "tensors " << tensors.size() << '\n';
  for (const auto& t : tensors) {
    f << t.name << " f32 " << t.value.rank();
    for (int d : t.value.shape()) f << ' ' << d;
    f << '\n';
  }
  f << "end\n";
  for (const auto& t : tensors)
    for (float v : t.value.values()) detail::put_f32(f, v);
  if (!f) throw Error("failed writing checkpoint '" + path.string() + "'");
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot open checkpoint '" + path.string() + "'");
  std::string line;
  if (!std::getline(f, line) || line != kCheckpointMagic) detail::bad_field("magic", "not a pixsup checkpoint");

  auto keyed = [&](const char* key) {
    if (!std::getline(f, line)) detail::bad_field(key, "missing (truncated header)");
    const std::string prefix = std::string(key) + " ";
    if (line.rfind(prefix, 0) != 0) detail::bad_field(key, "expected '" + prefix + "...', got '" + line + "'");
    return line.substr(prefix.size());
  };

  int version = 0;
  try {
    version = std::stoi(keyed("version"));
  } catch (const std::logic_error&) {
    detail::bad_field("version", "not an integer");
  }
  if (version != kCheckpointVersion)
    detail::bad_field("version", "unsupported version " + std::to_string(version) + " (expected " +
                                     std::to_string(kCheckpointVersion) + ")");

  Checkpoint ck;
  try {
    ck.config = train_config_from_json(Json::parse(keyed("config")));
  } catch (const nlohmann::json::exception& e) {
    detail::bad_field("config", e.what());
  } catch (const ConfigError& e) {
    detail::bad_field("config", e.what());
  }

  long long count = 0;
  try {
    count = std::stoll(keyed("tensors"));
  } catch (const std::logic_error&) {
    detail::bad_field("tensors", "not an integer");
  }
  if (count <= 0 || count > 100000) detail::bad_field("tensors", "implausible tensor count");

  std::vector<detail::NamedTensor> tensors;
  for (long long i = 0; i < count; ++i) {
    if (!std::getline(f, line)) detail::bad_field("tensor", "header ends after " + std::to_string(i) + " tensors");
    std::istringstream ss(line);
    std::string name, dtype;
    int rank = -1;
    ss >> name >> dtype >> rank;
    if (name.empty()) detail::bad_field("tensor name", "empty in line '" + line + "'");
    if (dtype != "f32") detail::bad_field("dtype", "unsupported dtype '" + dtype + "' for tensor '" + name + "'");
    if (!ss || rank < 0 || rank > 8) detail::bad_field("rank", "invalid rank for tensor '" + name + "'");
    std::vector<int> shape(static_cast<std::size_t>(rank));
    for (auto& d : shape) {
      if (!(ss >> d) || d < 0) detail::bad_field("dims", "invalid dimensions for tensor '" + name + "'");
    }
    tensors.push_back({name, Tensor<float>(shape)});
  }
  if (!std::getline(f, line) || line != "end") detail::bad_field("end", "missing header terminator");

  std::vector<unsigned char> buf;
  for (auto& t : tensors) {
    buf.resize(t.value.size() * 4);
    if (!f.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size())))
      throw FormatError("checkpoint payload truncated in tensor '" + t.name + "'");
    for (std::size_t j = 0; j < t.value.size(); ++j) t.value[j] = detail::get_f32(buf.data() + 4 * j);
  }
  if (f.peek() != std::char_traits<char>::eof()) throw FormatError("checkpoint has trailing bytes after payload");

  ck.pair.momentum = ck.config.ema_momentum;
  const Tensor<float>* vectors = nullptr;
  const Tensor<float>* valid = nullptr;
  const Tensor<float>* last = nullptr;
  for (auto& t : tensors) {
    if (t.name.rfind("main.", 0) == 0)
      ck.pair.main.add(t.name.substr(5), std::move(t.value));
    else if (t.name.rfind("support.", 0) == 0)
      ck.pair.support.add(t.name.substr(8), std::move(t.value));
    else if (t.name == "bank.vectors")
      vectors = &t.value;
    else if (t.name == "bank.valid")
      valid = &t.value;
    else if (t.name == "bank.last_update")
      last = &t.value;
    else
      detail::bad_field("tensor name", "unexpected tensor '" + t.name + "'");
  }
  if (vectors == nullptr || valid == nullptr || last == nullptr) detail::bad_field("tensor name", "prototype bank tensors missing");
  try {
    check_backbone_params(ck.pair.main, ck.config.backbone);
    check_backbone_params(ck.pair.support, ck.config.backbone);
  } catch (const ConfigError& e) {
    throw FormatError(std::string("checkpoint parameters do not match its config: ") + e.what());
  }
  if (vectors->rank() != 2 || valid->rank() != 1 || last->rank() != 1 || valid->dim(0) != vectors->dim(0) ||
      last->dim(0) != vectors->dim(0))
    detail::bad_field("dims", "prototype bank tensors have inconsistent shapes");
  ck.bank = PrototypeBank<float>(vectors->dim(0) - 1, vectors->dim(1));
  ck.bank.vectors = *vectors;
  for (int k = 0; k < vectors->dim(0); ++k) {
    ck.bank.valid[static_cast<std::size_t>(k)] = (*valid)[static_cast<std::size_t>(k)] != 0.f;
    ck.bank.last_update[static_cast<std::size_t>(k)] = static_cast<std::int64_t>((*last)[static_cast<std::size_t>(k)]);
  }
  return ck;
}

}  // namespace pixsup

#endif  // PIXSUP_CHECKPOINT_HPP
