#include <cstring>
#include <fstream>
#include <stdexcept>

#include "json.hpp"
#include "weakseg/net.hpp"

namespace weakseg {

void save_checkpoint(const std::string& path, const ParamRegistry& reg) {
  nlohmann::json manifest = nlohmann::json::array();
  int64_t offset = 0;
  for (const auto& [name, param] : reg.entries) {
    manifest.push_back({{"name", name},
                        {"shape", param->value.shape},
                        {"byte_offset", offset}});
    offset += param->value.numel() * 4;
  }
  const std::string mtext = manifest.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
  uint64_t mlen = mtext.size();
  unsigned char lenbuf[8];
  for (int i = 0; i < 8; ++i) lenbuf[i] = (mlen >> (8 * i)) & 0xff;
  out.write(reinterpret_cast<const char*>(lenbuf), 8);
  out.write(mtext.data(), static_cast<std::streamsize>(mtext.size()));
  for (const auto& [name, param] : reg.entries) {
    std::vector<float> f(param->value.data.begin(), param->value.data.end());
    out.write(reinterpret_cast<const char*>(f.data()),
              static_cast<std::streamsize>(f.size() * 4));
  }
  if (!out) throw std::runtime_error("checkpoint write failed: " + path);
}

void load_checkpoint(const std::string& path, ParamRegistry& reg) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read checkpoint: " + path);
  unsigned char lenbuf[8];
  in.read(reinterpret_cast<char*>(lenbuf), 8);
  uint64_t mlen = 0;
  for (int i = 0; i < 8; ++i) mlen |= static_cast<uint64_t>(lenbuf[i]) << (8 * i);
  std::string mtext(mlen, '\0');
  in.read(mtext.data(), static_cast<std::streamsize>(mlen));
  if (!in) throw std::runtime_error("truncated checkpoint: " + path);
  const nlohmann::json manifest = nlohmann::json::parse(mtext);
  const std::streampos blob_start = in.tellg();

  for (auto& [name, param] : reg.entries) {
    const nlohmann::json* entry = nullptr;
    for (const auto& e : manifest)
      if (e.at("name").get<std::string>() == name) {
        entry = &e;
        break;
      }
    if (!entry)
      throw std::runtime_error("checkpoint missing tensor: " + name);
    const auto shape = entry->at("shape").get<std::vector<int>>();
    if (shape != param->value.shape)
      throw std::runtime_error("checkpoint shape mismatch for " + name);
    in.seekg(blob_start + std::streampos(entry->at("byte_offset").get<int64_t>()));
    std::vector<float> f(param->value.data.size());
    in.read(reinterpret_cast<char*>(f.data()),
            static_cast<std::streamsize>(f.size() * 4));
    if (!in) throw std::runtime_error("truncated checkpoint blob: " + path);
    for (size_t i = 0; i < f.size(); ++i)
      param->value.data[i] = static_cast<double>(f[i]);
    std::fill(param->velocity.begin(), param->velocity.end(), 0.0);
  }
}

}  // namespace weakseg
