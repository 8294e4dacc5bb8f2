#include "cogdiag/checkpoint.hpp"

#include <json.hpp>

#include "cogdiag/errors.hpp"
#include "cogdiag/io.hpp"

namespace cogdiag {

namespace {
constexpr int kVersion = 1;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  nlohmann::json doc;
  doc["version"] = kVersion;
  doc["meta"] = ckpt.meta;
  nlohmann::json params = nlohmann::json::array();
  for (const auto& e : ckpt.params.entries()) {
    nlohmann::json p;
    p["name"] = e.name;
    p["shape"] = e.value.shape();
    p["data"] = std::vector<double>(e.value.data().begin(), e.value.data().end());
    params.push_back(std::move(p));
  }
  doc["params"] = std::move(params);
  write_file_atomic(path, doc.dump(2) + "\n");
}

Checkpoint load_checkpoint(const std::string& path) {
  const std::string text = read_file(path);
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("checkpoint is not valid JSON: " + std::string(e.what()));
  }
  try {
    if (!doc.contains("version") || !doc["version"].is_number_integer())
      throw ValidationError("checkpoint has no version field");
    if (doc["version"].get<int>() != kVersion)
      throw ValidationError("unsupported checkpoint version " + doc["version"].dump());
    Checkpoint ckpt;
    if (doc.contains("meta"))
      ckpt.meta = doc["meta"].get<std::map<std::string, std::string>>();
    for (const auto& p : doc.at("params")) {
      const std::string name = p.at("name").get<std::string>();
      const auto shape = p.at("shape").get<std::vector<std::size_t>>();
      auto data = p.at("data").get<std::vector<double>>();
      if (shape.empty() || shape.size() > 2)
        throw ValidationError("checkpoint parameter " + name + " has unsupported rank");
      Tensor t = shape.size() == 1 ? Tensor::from_vector(std::move(data))
                                   : Tensor::from_matrix(std::move(data), shape[0], shape[1]);
      if (t.shape() != shape)
        throw ValidationError("checkpoint parameter " + name + " shape does not match data");
      if (!t.all_finite())
        throw ValidationError("checkpoint parameter " + name + " holds non-finite values");
      ckpt.params.add(name, std::move(t));
    }
    return ckpt;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("malformed checkpoint: " + std::string(e.what()));
  }
}

}  // namespace cogdiag
