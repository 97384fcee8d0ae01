#include "cng/hgt/checkpoint.hpp"

#include <openssl/evp.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "cng/core/errors.hpp"

namespace cng {
namespace {

constexpr char kMagic[8] = {'C', 'N', 'G', 'C', 'K', 'P', 'T', '\0'};

void put_u64(std::string& out, std::uint64_t v) {
  for (int b = 0; b < 8; ++b) out.push_back(static_cast<char>((v >> (8 * b)) & 0xff));
}

std::uint64_t get_u64(std::string_view in, std::size_t at) {
  std::uint64_t v = 0;
  for (int b = 0; b < 8; ++b) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[at + b])) << (8 * b);
  return v;
}

}  // namespace

const Tensor& Checkpoint::tensor(const std::string& name) const {
  for (const auto& t : tensors)
    if (t.name == name) return t.value;
  throw CheckpointError("checkpoint has no tensor '" + name + "'");
}

std::string encode_checkpoint(const Checkpoint& ckpt) {
  nlohmann::json manifest;
  manifest["format_version"] = kCheckpointFormatVersion;
  manifest["kind"] = ckpt.kind;
  manifest["config"] = ckpt.config;
  manifest["tensors"] = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& t : ckpt.tensors) {
    manifest["tensors"].push_back(
        {{"name", t.name}, {"shape", t.value.shape()}, {"offset", offset}, {"count", t.value.size()}});
    offset += 4 * t.value.size();
  }
  manifest["payload_bytes"] = offset;
  const std::string text = manifest.dump();

  std::string out(kMagic, sizeof kMagic);
  put_u64(out, text.size());
  out += text;
  out.reserve(out.size() + offset);
  for (const auto& t : ckpt.tensors) {
    for (double v : t.value.values()) {
      const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
      for (int b = 0; b < 4; ++b) out.push_back(static_cast<char>((bits >> (8 * b)) & 0xff));
    }
  }
  return out;
}

Checkpoint decode_checkpoint(std::string_view bytes) {
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0)
    throw CheckpointError("not a checkpoint file (bad magic)");
  const std::uint64_t len = get_u64(bytes, 8);
  if (len > bytes.size() - 16) throw CheckpointError("truncated checkpoint manifest");
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(bytes.substr(16, len));
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("unreadable checkpoint manifest: ") + e.what());
  }
  const std::string_view payload = bytes.substr(16 + len);
  try {
    if (manifest.at("format_version").get<int>() != kCheckpointFormatVersion)
      throw CheckpointError("unsupported checkpoint format_version " + manifest["format_version"].dump());
    if (manifest.at("payload_bytes").get<std::uint64_t>() != payload.size())
      throw CheckpointError("checkpoint payload size does not match manifest");
    Checkpoint ckpt;
    ckpt.kind = manifest.at("kind").get<std::string>();
    ckpt.config = manifest.at("config");
    for (const auto& entry : manifest.at("tensors")) {
      Shape shape = entry.at("shape").get<Shape>();
      const auto offset = entry.at("offset").get<std::uint64_t>();
      const auto count = entry.at("count").get<std::uint64_t>();
      if (count != shape_numel(shape) || offset + 4 * count > payload.size())
        throw CheckpointError("tensor '" + entry.at("name").get<std::string>() + "' has an inconsistent extent");
      Tensor value(shape);
      for (std::size_t i = 0; i < count; ++i) {
        std::uint32_t bits = 0;
        for (int b = 0; b < 4; ++b)
          bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(payload[offset + 4 * i + b])) << (8 * b);
        value[i] = static_cast<double>(std::bit_cast<float>(bits));
      }
      ckpt.tensors.push_back({entry.at("name").get<std::string>(), std::move(value)});
    }
    return ckpt;
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("malformed checkpoint manifest: ") + e.what());
  }
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  const std::string bytes = encode_checkpoint(ckpt);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failure in " + path.string());
}

namespace {
std::string read_binary(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}
}  // namespace

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw IoError("no such checkpoint: " + path.string());
  return decode_checkpoint(read_binary(path));
}

Checkpoint checkpoint_from_store(std::string kind, nlohmann::json config, const ParameterStore& store) {
  Checkpoint c{std::move(kind), std::move(config), {}};
  for (const auto& e : store.entries()) c.tensors.push_back({e.name, e.var.value()});
  return c;
}

void restore_store(ParameterStore& store, const Checkpoint& ckpt) {
  if (ckpt.tensors.size() != store.entries().size()) {
    throw CheckpointError("checkpoint holds " + std::to_string(ckpt.tensors.size()) + " tensors, model expects " +
                          std::to_string(store.entries().size()));
  }
  for (auto e : store.entries()) {
    const Tensor& t = ckpt.tensor(e.name);
    if (t.shape() != e.var.value().shape()) {
      throw CheckpointError("tensor '" + e.name + "' has shape " + shape_string(t.shape()) + ", model expects " +
                            shape_string(e.var.value().shape()));
    }
    e.var.mutable_value() = t;
  }
}

void round_to_float32(ParameterStore& store) {
  for (auto e : store.entries())
    for (double& v : e.var.mutable_value().values()) v = static_cast<double>(static_cast<float>(v));
}

std::string sha256_hex(std::string_view bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1)
    throw Error("sha256 computation failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[digest[i] >> 4]);
    out.push_back(hex[digest[i] & 15]);
  }
  return out;
}

std::string sha256_file(const std::filesystem::path& path) { return sha256_hex(read_binary(path)); }

}  // namespace cng
