#include "shapepoint/checkpoint.hpp"

#include <cstring>

#include <json.hpp>

#include "shapepoint/errors.hpp"
#include "shapepoint/io.hpp"

namespace shapepoint::checkpoint {

using nlohmann::json;

Archive capture(const nn::ParamList<float>& params, std::string config_json, std::int64_t step) {
  Archive a;
  a.config_json = std::move(config_json);
  a.step = step;
  for (const auto* p : params) {
    if (a.tensors.count(p->name)) throw InternalError("duplicate parameter name '" + p->name + "'");
    a.tensors[p->name] = {p->value.shape, p->value.data};
  }
  return a;
}

void restore(const Archive& a, const nn::ParamList<float>& params) {
  for (auto* p : params) {
    auto it = a.tensors.find(p->name);
    if (it == a.tensors.end()) throw FormatError("checkpoint: missing tensor '" + p->name + "'");
    if (it->second.shape != p->value.shape) throw FormatError("checkpoint: shape mismatch for tensor '" + p->name + "'");
    p->value.data = it->second.data;
  }
}

void save(const std::filesystem::path& file, const Archive& a) {
  json header;
  header["config"] = a.config_json.empty() ? json(nullptr) : json::parse(a.config_json);
  header["step"] = a.step;
  header["tensors"] = json::array();
  std::string payload;
  std::size_t offset = 0;
  for (const auto& [name, t] : a.tensors) {
    header["tensors"].push_back({{"name", name}, {"shape", t.shape}, {"offset", offset}});
    io::append_le(payload, t.data.data(), t.data.size());
    offset += t.data.size();
  }
  const std::string h = header.dump();
  std::string out(kMagic, sizeof(kMagic));
  const std::uint32_t version = kVersion;
  const std::uint64_t hlen = h.size();
  io::append_le(out, &version, 1);
  io::append_le(out, &hlen, 1);
  out += h;
  out += payload;
  io::atomic_write(file, out);
}

Archive load(const std::filesystem::path& file) {
  const std::string bytes = io::read_file(file);
  constexpr std::size_t prefix = sizeof(kMagic) + 4 + 8;
  if (bytes.size() < prefix || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0)
    throw FormatError("checkpoint '" + file.string() + "': bad magic");
  const auto version = io::decode_le<std::uint32_t>(std::string_view(bytes).substr(8, 4))[0];
  if (version != kVersion) throw FormatError("checkpoint: unsupported version " + std::to_string(version));
  const auto hlen = io::decode_le<std::uint64_t>(std::string_view(bytes).substr(12, 8))[0];
  if (bytes.size() < prefix + hlen) throw FormatError("checkpoint: truncated header");
  json header;
  try {
    header = json::parse(bytes.substr(prefix, hlen));
  } catch (const json::exception& e) {
    throw FormatError("checkpoint: corrupt header: " + std::string(e.what()));
  }
  const std::string_view payload = std::string_view(bytes).substr(prefix + hlen);
  Archive a;
  try {
    a.config_json = header["config"].is_null() ? "" : header["config"].dump();
    a.step = header.at("step").get<std::int64_t>();
    for (const auto& t : header.at("tensors")) {
      StoredTensor st;
      st.shape = t.at("shape").get<std::vector<int>>();
      const std::size_t off = t.at("offset").get<std::size_t>();
      const std::size_t n = nn::Tensor<float>::numel(st.shape);
      if ((off + n) * sizeof(float) > payload.size())
        throw FormatError("checkpoint: payload too short for tensor '" + t.at("name").get<std::string>() + "'");
      st.data = io::decode_le<float>(payload.substr(off * sizeof(float), n * sizeof(float)));
      a.tensors[t.at("name").get<std::string>()] = std::move(st);
    }
  } catch (const json::exception& e) {
    throw FormatError("checkpoint: malformed tensor table: " + std::string(e.what()));
  }
  return a;
}

}  // namespace shapepoint::checkpoint
