#include "cdet/io/safetensors.hpp"

#include <cstring>
#include <fstream>

#include <json.hpp>

#include "cdet/error.hpp"

namespace cdet::io {

namespace {

using nlohmann::json;

struct DtypeEntry {
  const char* name;
  torch::ScalarType type;
};

constexpr DtypeEntry kDtypes[] = {
    {"F64", torch::kFloat64}, {"F32", torch::kFloat32}, {"F16", torch::kFloat16},
    {"BF16", torch::kBFloat16}, {"I64", torch::kInt64}, {"I32", torch::kInt32},
    {"I16", torch::kInt16}, {"I8", torch::kInt8}, {"U8", torch::kUInt8},
    {"BOOL", torch::kBool},
};

torch::ScalarType parse_dtype(const std::string& name, const std::filesystem::path& path) {
  for (const auto& e : kDtypes)
    if (name == e.name) return e.type;
  fail(Errc::integrity_error, "'" + path.string() + "': unsupported dtype " + name);
}

const char* dtype_name(torch::ScalarType type) {
  for (const auto& e : kDtypes)
    if (type == e.type) return e.name;
  fail(Errc::invalid_argument, "safetensors: unsupported tensor dtype");
}

}  // namespace

TensorArchive read_safetensors(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Errc::io_error, "cannot open '" + path.string() + "'");
  const auto file_size = std::filesystem::file_size(path);

  unsigned char len_bytes[8];
  if (!in.read(reinterpret_cast<char*>(len_bytes), 8))
    fail(Errc::integrity_error, "'" + path.string() + "': truncated header");
  uint64_t header_len = 0;
  for (int i = 7; i >= 0; --i) header_len = (header_len << 8) | len_bytes[i];
  if (header_len > file_size - 8)
    fail(Errc::integrity_error, "'" + path.string() + "': header length out of range");

  std::string header(header_len, '\0');
  in.read(header.data(), static_cast<std::streamsize>(header_len));
  json meta;
  try {
    meta = json::parse(header);
  } catch (const json::exception& e) {
    fail(Errc::integrity_error, "'" + path.string() + "': bad header: " + e.what());
  }

  const uint64_t data_len = file_size - 8 - header_len;
  std::vector<char> buffer(data_len);
  in.read(buffer.data(), static_cast<std::streamsize>(data_len));
  if (!in) fail(Errc::integrity_error, "'" + path.string() + "': truncated data");

  TensorArchive out;
  for (auto it = meta.begin(); it != meta.end(); ++it) {
    if (it.key() == "__metadata__") {
      for (auto m = it.value().begin(); m != it.value().end(); ++m)
        out.metadata[m.key()] = m.value().get<std::string>();
      continue;
    }
    const auto& desc = it.value();
    auto dtype = parse_dtype(desc.at("dtype").get<std::string>(), path);
    auto shape = desc.at("shape").get<std::vector<int64_t>>();
    auto offsets = desc.at("data_offsets").get<std::vector<uint64_t>>();
    if (offsets.size() != 2 || offsets[0] > offsets[1] || offsets[1] > data_len)
      fail(Errc::integrity_error, "'" + path.string() + "': bad offsets for " + it.key());
    auto tensor = torch::empty(shape, torch::TensorOptions().dtype(dtype));
    const auto nbytes = static_cast<uint64_t>(tensor.numel()) * tensor.element_size();
    if (nbytes != offsets[1] - offsets[0])
      fail(Errc::integrity_error, "'" + path.string() + "': size mismatch for " + it.key());
    if (nbytes > 0) std::memcpy(tensor.data_ptr(), buffer.data() + offsets[0], nbytes);
    out.tensors.emplace(it.key(), std::move(tensor));
  }
  return out;
}

void write_safetensors(const std::filesystem::path& path, const TensorArchive& archive) {
  json header = json::object();
  if (!archive.metadata.empty()) header["__metadata__"] = archive.metadata;

  std::vector<torch::Tensor> ordered;
  uint64_t offset = 0;
  for (const auto& [name, tensor] : archive.tensors) {
    auto t = tensor.detach().to(torch::kCPU).contiguous();
    const uint64_t nbytes = static_cast<uint64_t>(t.numel()) * t.element_size();
    header[name] = {{"dtype", dtype_name(t.scalar_type())},
                    {"shape", t.sizes().vec()},
                    {"data_offsets", {offset, offset + nbytes}}};
    offset += nbytes;
    ordered.push_back(std::move(t));
  }
  std::string text = header.dump();
  while ((text.size() + 8) % 8 != 0) text.push_back(' ');

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(Errc::io_error, "cannot write '" + path.string() + "'");
  const uint64_t len = text.size();
  unsigned char len_bytes[8];
  for (int i = 0; i < 8; ++i) len_bytes[i] = static_cast<unsigned char>((len >> (8 * i)) & 0xff);
  out.write(reinterpret_cast<const char*>(len_bytes), 8);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& t : ordered) {
    const auto nbytes = static_cast<std::streamsize>(t.numel() * t.element_size());
    if (nbytes > 0) out.write(static_cast<const char*>(t.data_ptr()), nbytes);
  }
  if (!out) fail(Errc::io_error, "short write to '" + path.string() + "'");
}

}  // namespace cdet::io
