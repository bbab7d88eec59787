#include "hstf/net/checkpoint.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <string>

#include "hstf/common/codec.hpp"
#include "hstf/common/error.hpp"

namespace hstf::net {

using nlohmann::json;

namespace {

[[noreturn]] void bad(const std::string& msg) { throw Error(ErrorCode::kCheckpoint, msg); }

}  // namespace

json CheckpointMeta::to_json() const {
  return json{{"epochs", epochs},     {"best_epoch", best_epoch}, {"train_loss", train_loss},
              {"val_loss", val_loss}, {"val_f1", val_f1},         {"seed", seed}};
}

CheckpointMeta CheckpointMeta::from_json(const json& j) {
  CheckpointMeta m;
  if (!j.is_object()) return m;
  m.epochs = j.value("epochs", 0);
  m.best_epoch = j.value("best_epoch", 0);
  m.train_loss = j.value("train_loss", 0.0);
  m.val_loss = j.value("val_loss", 0.0);
  m.val_f1 = j.value("val_f1", 0.0);
  m.seed = j.value("seed", uint64_t{0});
  return m;
}

json checkpoint_to_json(const Model<float>& model, const CheckpointMeta& meta) {
  json params = json::object();
  for (const auto& t : model.params()) {
    params[t.name] = json{{"shape", t.shape}, {"data", t.data}};
  }
  return json{{"version", kCheckpointSchema},
              {"config", model.config().to_json()},
              {"params", std::move(params)},
              {"meta", meta.to_json()}};
}

Checkpoint checkpoint_from_json(const json& doc, const std::filesystem::path& base_dir) {
  if (!doc.is_object() || doc.value("version", std::string()) != kCheckpointSchema) {
    bad("not an " + std::string(kCheckpointSchema) + " document");
  }
  if (!doc.contains("config") || !doc.contains("params") || !doc.at("params").is_object()) {
    bad("checkpoint lacks config or params");
  }
  ModelConfig config;
  try {
    config = ModelConfig::from_json(doc.at("config"));
  } catch (const Error& e) {
    bad(std::string("checkpoint config invalid: ") + e.what());
  }
  Checkpoint ck{Model<float>(config), CheckpointMeta::from_json(doc.value("meta", json::object()))};

  std::string blob;
  if (doc.contains("blob")) {
    const auto blob_path = base_dir / doc.at("blob").get<std::string>();
    try {
      blob = read_file_bytes(blob_path);
    } catch (const Error& e) {
      bad(std::string("cannot read parameter blob: ") + e.what());
    }
  }

  const auto& params = doc.at("params");
  if (params.size() != ck.model.params().count()) {
    bad("checkpoint holds " + std::to_string(params.size()) + " parameter arrays, config implies " +
        std::to_string(ck.model.params().count()));
  }
  try {
    for (auto& t : ck.model.params()) {
      if (!params.contains(t.name)) bad("missing parameter " + t.name);
      const auto& p = params.at(t.name);
      if (p.at("shape").get<std::vector<size_t>>() != t.shape) bad("shape mismatch for " + t.name);
      if (p.contains("data")) {
        const auto& data = p.at("data");
        if (!data.is_array() || data.size() != t.size()) bad("wrong element count for " + t.name);
        for (size_t i = 0; i < t.size(); ++i) {
          if (!data[i].is_number()) bad("non-numeric value in " + t.name);
          t.data[i] = data[i].get<float>();
        }
      } else {
        const auto offset = p.at("offset").get<uint64_t>();
        const auto count = p.at("count").get<uint64_t>();
        if (count != t.size()) bad("wrong element count for " + t.name);
        if (offset + count * sizeof(float) > blob.size()) bad("parameter blob too short for " + t.name);
        std::memcpy(t.data.data(), blob.data() + offset, count * sizeof(float));
      }
      for (float v : t.data) {
        if (!std::isfinite(v)) bad("non-finite value in " + t.name);
      }
    }
  } catch (const json::exception& e) {
    bad(std::string("malformed checkpoint: ") + e.what());
  }
  return ck;
}

void save_checkpoint(const std::filesystem::path& path, const Model<float>& model,
                     const CheckpointMeta& meta, bool sidecar) {
  static_assert(std::endian::native == std::endian::little, "sidecar blobs are little-endian");
  json doc = checkpoint_to_json(model, meta);
  if (sidecar) {
    std::string blob;
    auto blob_path = path;
    blob_path += ".bin";
    for (const auto& t : model.params()) {
      auto& p = doc["params"][t.name];
      p.erase("data");
      p["offset"] = blob.size();
      p["count"] = t.size();
      blob.append(reinterpret_cast<const char*>(t.data.data()), t.size() * sizeof(float));
    }
    doc["blob"] = blob_path.filename().string();
    write_file_bytes(blob_path, blob);
  }
  write_file_bytes(path, doc.dump() + "\n");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::string text;
  try {
    text = read_file_bytes(path);
  } catch (const Error& e) {
    bad(std::string("cannot read checkpoint: ") + e.what());
  }
  json doc = json::parse(text, nullptr, false);
  if (doc.is_discarded()) bad("checkpoint " + path.string() + " is not valid JSON");
  return checkpoint_from_json(doc, path.parent_path());
}

}  // namespace hstf::net
