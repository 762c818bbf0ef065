#include "sgg/checkpoint.hpp"

#include <stdexcept>

#include "sgg/util.hpp"

namespace sgg::nn {

using nlohmann::json;

static std::string blob_path_for(const std::string& manifest_path) {
  return manifest_path + ".bin";
}

void save_checkpoint(const std::string& manifest_path, const std::vector<Parameter*>& params,
                     const json& config_echo) {
  json manifest;
  manifest["config"] = config_echo;
  json plist = json::array();
  std::vector<float> blob;
  int64_t offset = 0;
  for (const Parameter* p : params) {
    plist.push_back({{"name", p->name},
                     {"shape", {p->value.rows, p->value.cols}},
                     {"offset", offset}});
    blob.insert(blob.end(), p->value.data.begin(), p->value.data.end());
    offset += p->value.numel() * 4;
  }
  manifest["params"] = plist;
  manifest["total_bytes"] = offset;
  std::string blob_file = blob_path_for(manifest_path);
  manifest["blob"] = blob_file.substr(blob_file.find_last_of('/') + 1);

  std::vector<uint8_t> bytes = pack_f32_le(blob);
  write_file(blob_file, std::string(bytes.begin(), bytes.end()));
  write_file(manifest_path, manifest.dump(2));
}

json load_checkpoint(const std::string& manifest_path, const std::vector<Parameter*>& params) {
  json manifest = json::parse(read_file(manifest_path));
  std::string content = read_file(blob_path_for(manifest_path));
  if (static_cast<int64_t>(content.size()) != manifest.at("total_bytes").get<int64_t>())
    throw std::runtime_error("checkpoint blob length mismatch");
  std::vector<float> blob =
      unpack_f32_le(std::vector<uint8_t>(content.begin(), content.end()));

  const json& plist = manifest.at("params");
  if (plist.size() != params.size())
    throw std::runtime_error("checkpoint parameter count mismatch");
  for (size_t i = 0; i < params.size(); ++i) {
    const json& e = plist[i];
    Parameter& p = *params[i];
    if (e.at("name").get<std::string>() != p.name)
      throw std::runtime_error("checkpoint parameter name mismatch: expected " + p.name +
                               ", found " + e.at("name").get<std::string>());
    int rows = e.at("shape")[0].get<int>(), cols = e.at("shape")[1].get<int>();
    if (rows != p.value.rows || cols != p.value.cols)
      throw std::runtime_error("checkpoint shape mismatch for " + p.name);
    int64_t offset = e.at("offset").get<int64_t>() / 4;
    if (offset + p.value.numel() > static_cast<int64_t>(blob.size()))
      throw std::runtime_error("checkpoint offset out of range for " + p.name);
    std::copy(blob.begin() + offset, blob.begin() + offset + p.value.numel(),
              p.value.data.begin());
  }
  return manifest.at("config");
}

json peek_checkpoint_config(const std::string& manifest_path) {
  json manifest = json::parse(read_file(manifest_path));
  return manifest.at("config");
}

}  // namespace sgg::nn
