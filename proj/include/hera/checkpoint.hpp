// SPDX-License-Identifier: Apache-2.0
//
// Checkpoint container:
//
//   bytes 0..7   magic "HERACKPT"
//   u32          format version
//   u64          header length n
//   n bytes      JSON header: model kind, config, vocabularies, tensor list
//   doubles      tensor values in header order, little endian
//   u64          FNV-1a 64 checksum of everything above
//
// Only parameter values are stored; optimizer moments are not.
#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include <json.hpp>

#include "hera/annotations.hpp"
#include "hera/errors.hpp"
#include "hera/model.hpp"
#include "hera/training.hpp"

namespace hera {

inline constexpr char kCheckpointMagic[8] = {'H', 'E', 'R', 'A', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

inline std::uint64_t fnv1a64(const std::uint8_t* data, std::size_t n) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= data[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline nlohmann::ordered_json config_to_json(const HeraConfig& c) {
  nlohmann::ordered_json j;
  j["hidden_size"] = c.hidden_size;
  j["embed_dim"] = c.embed_dim;
  j["mlp_width"] = c.mlp_width;
  j["lr"] = c.lr;
  j["batch_size"] = c.batch_size;
  j["epochs"] = c.epochs;
  j["splits_per_video"] = c.splits_per_video;
  j["min_observe"] = c.min_observe;
  j["max_observe"] = c.max_observe;
  j["max_rollout_steps_per_level"] = c.max_rollout_steps_per_level;
  j["encoder_loss_enabled"] = c.encoder_loss_enabled;
  j["cross_level_messages"] = c.cross_level_messages;
  j["label_in_downward_msg"] = c.label_in_downward_msg;
  j["freeze_embeddings"] = c.freeze_embeddings;
  j["scheduled_sampling"] = c.scheduled_sampling;
  j["seed"] = c.seed;
  return j;
}

inline HeraConfig config_from_json(const nlohmann::json& j) {
  HeraConfig c;
  try {
    c.hidden_size = j.at("hidden_size").get<std::size_t>();
    c.embed_dim = j.at("embed_dim").get<std::size_t>();
    c.mlp_width = j.at("mlp_width").get<std::size_t>();
    c.lr = j.at("lr").get<double>();
    c.batch_size = j.at("batch_size").get<std::size_t>();
    c.epochs = j.at("epochs").get<std::size_t>();
    c.splits_per_video = j.at("splits_per_video").get<std::size_t>();
    c.min_observe = j.at("min_observe").get<double>();
    c.max_observe = j.at("max_observe").get<double>();
    c.max_rollout_steps_per_level = j.at("max_rollout_steps_per_level").get<std::size_t>();
    c.encoder_loss_enabled = j.at("encoder_loss_enabled").get<bool>();
    c.cross_level_messages = j.at("cross_level_messages").get<bool>();
    c.label_in_downward_msg = j.at("label_in_downward_msg").get<bool>();
    c.freeze_embeddings = j.at("freeze_embeddings").get<bool>();
    c.scheduled_sampling = j.at("scheduled_sampling").get<double>();
    c.seed = j.at("seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("checkpoint config: ") + e.what());
  }
  return c;
}

struct Checkpoint {
  ModelKind kind = ModelKind::Hera;
  HeraConfig config;
  Vocabularies vocab;
  AnyModel model;
};

namespace detail {

template <class T>
void put_le(std::vector<std::uint8_t>& out, T v) {
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

template <class T>
T get_le(const std::vector<std::uint8_t>& in, std::size_t& at) {
  if (at + sizeof(T) > in.size()) throw CheckpointError("checkpoint truncated");
  T v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(in[at + i]) << (8 * i);
  at += sizeof(T);
  return v;
}

}  // namespace detail

inline std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ck) {
  AnyModel& model = const_cast<AnyModel&>(ck.model);  // parameters() is non-const; nothing is modified
  const std::vector<Parameter*> params = model_parameters(model);
  nlohmann::ordered_json header;
  header["model"] = model_kind_name(ck.kind);
  header["config"] = config_to_json(ck.config);
  header["vocab"] = {{"tasks", ck.vocab.tasks.names()},
                     {"coarse", ck.vocab.coarse.names()},
                     {"fine", ck.vocab.fine.names()}};
  header["tensors"] = nlohmann::ordered_json::array();
  for (const Parameter* p : params) {
    header["tensors"].push_back({{"name", p->name}, {"rows", p->value.rows}, {"cols", p->value.cols}});
  }
  const std::string text = header.dump();

  std::vector<std::uint8_t> out(std::begin(kCheckpointMagic), std::end(kCheckpointMagic));
  detail::put_le<std::uint32_t>(out, kCheckpointVersion);
  detail::put_le<std::uint64_t>(out, text.size());
  out.insert(out.end(), text.begin(), text.end());
  for (const Parameter* p : params) {
    for (double v : p->value.data) detail::put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
  }
  detail::put_le<std::uint64_t>(out, fnv1a64(out.data(), out.size()));
  return out;
}

inline Checkpoint deserialize_checkpoint(const std::vector<std::uint8_t>& in) {
  if (in.size() < sizeof(kCheckpointMagic) + 4 + 8 + 8 ||
      std::memcmp(in.data(), kCheckpointMagic, sizeof(kCheckpointMagic)) != 0) {
    throw CheckpointError("not a checkpoint file");
  }
  std::size_t at = sizeof(kCheckpointMagic);
  const auto version = detail::get_le<std::uint32_t>(in, at);
  if (version != kCheckpointVersion) {
    throw CheckpointError("checkpoint format version " + std::to_string(version) + " (this build reads " +
                          std::to_string(kCheckpointVersion) + ")");
  }
  const auto header_len = detail::get_le<std::uint64_t>(in, at);
  if (header_len > in.size() - at) throw CheckpointError("checkpoint truncated");
  {
    std::size_t tail = in.size() - 8;
    const auto stored = detail::get_le<std::uint64_t>(in, tail);
    if (stored != fnv1a64(in.data(), in.size() - 8)) throw CheckpointError("checkpoint checksum mismatch");
  }
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(in.begin() + static_cast<std::ptrdiff_t>(at),
                                   in.begin() + static_cast<std::ptrdiff_t>(at + header_len));
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("checkpoint header: ") + e.what());
  }
  at += header_len;

  Checkpoint ck;
  try {
    ck.kind = parse_model_kind(header.at("model").get<std::string>());
    ck.config = config_from_json(header.at("config"));
    ck.vocab.tasks = Vocabulary(header.at("vocab").at("tasks").get<std::vector<std::string>>());
    ck.vocab.coarse = Vocabulary(header.at("vocab").at("coarse").get<std::vector<std::string>>());
    ck.vocab.fine = Vocabulary(header.at("vocab").at("fine").get<std::vector<std::string>>());
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("checkpoint header: ") + e.what());
  } catch (const ConfigurationError& e) {
    throw CheckpointError(e.what());
  }
  ck.model = make_model(ck.kind, ck.config, ck.vocab.coarse.size(), ck.vocab.fine.size());
  const std::vector<Parameter*> params = model_parameters(ck.model);
  const auto& tensors = header.at("tensors");
  if (tensors.size() != params.size()) {
    throw CheckpointError("checkpoint holds " + std::to_string(tensors.size()) + " tensors, model expects " +
                          std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter& p = *params[i];
    const auto& t = tensors[i];
    if (t.at("name").get<std::string>() != p.name || t.at("rows").get<std::size_t>() != p.value.rows ||
        t.at("cols").get<std::size_t>() != p.value.cols) {
      throw CheckpointError("checkpoint tensor " + std::to_string(i) + " does not match parameter '" + p.name + "'");
    }
    for (double& v : p.value.data) {
      if (at + 8 > in.size() - 8) throw CheckpointError("checkpoint truncated");
      v = std::bit_cast<double>(detail::get_le<std::uint64_t>(in, at));
    }
  }
  if (at != in.size() - 8) throw CheckpointError("checkpoint has trailing bytes");
  return ck;
}

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  const auto bytes = serialize_checkpoint(ck);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("cannot write checkpoint '" + path.string() + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw CheckpointError("failed writing checkpoint '" + path.string() + "'");
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint '" + path.string() + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_checkpoint(bytes);
}

}  // namespace hera
