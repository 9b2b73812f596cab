#include "dualwalk/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include <fmt/format.h>

#include "dualwalk/error.hpp"

namespace dualwalk {

static_assert(std::endian::native == std::endian::little, "checkpoints are little-endian");

namespace {

constexpr char kMagic[8] = {'D', 'W', 'C', 'K', 'P', 'T', '\0', '\0'};
constexpr std::uint32_t kVersion = 1;

template <typename V>
void put(std::ostream& out, V v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(V));
}

template <typename V>
V get(std::istream& in) {
  V v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(V));
  if (!in) throw ArtifactError("checkpoint is truncated");
  return v;
}

}  // namespace

const Matrix<float>& Checkpoint::at(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return t.value;
  }
  throw ArtifactError(fmt::format("checkpoint has no tensor '{}'", name));
}

bool Checkpoint::contains(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return true;
  }
  return false;
}

void save_checkpoint(const Checkpoint& ckpt, std::ostream& out) {
  out.write(kMagic, sizeof(kMagic));
  put(out, kVersion);
  const std::string manifest = ckpt.manifest.dump();
  put(out, static_cast<std::uint64_t>(manifest.size()));
  out.write(manifest.data(), static_cast<std::streamsize>(manifest.size()));
  put(out, static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const auto& t : ckpt.tensors) {
    put(out, static_cast<std::uint32_t>(t.name.size()));
    out.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
    put(out, static_cast<std::uint32_t>(t.value.rows));
    put(out, static_cast<std::uint32_t>(t.value.cols));
    out.write(reinterpret_cast<const char*>(t.value.data.data()),
              static_cast<std::streamsize>(t.value.size() * sizeof(float)));
  }
  if (!out) throw ArtifactError("failed to write checkpoint");
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ArtifactError(fmt::format("cannot write '{}'", path.string()));
  save_checkpoint(ckpt, out);
}

Checkpoint load_checkpoint(std::istream& in) {
  char magic[sizeof(kMagic)];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) throw ArtifactError("not a checkpoint file");
  const auto version = get<std::uint32_t>(in);
  if (version != kVersion) throw ArtifactError(fmt::format("unsupported checkpoint version {}", version));
  Checkpoint ckpt;
  const auto manifest_size = get<std::uint64_t>(in);
  std::string manifest(manifest_size, '\0');
  in.read(manifest.data(), static_cast<std::streamsize>(manifest_size));
  if (!in) throw ArtifactError("checkpoint is truncated");
  try {
    ckpt.manifest = nlohmann::json::parse(manifest);
  } catch (const nlohmann::json::exception& e) {
    throw ArtifactError(fmt::format("checkpoint manifest is not valid JSON: {}", e.what()));
  }
  const auto count = get<std::uint32_t>(in);
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedTensor t;
    t.name.resize(get<std::uint32_t>(in));
    in.read(t.name.data(), static_cast<std::streamsize>(t.name.size()));
    const auto rows = get<std::uint32_t>(in);
    const auto cols = get<std::uint32_t>(in);
    t.value = Matrix<float>(rows, cols);
    in.read(reinterpret_cast<char*>(t.value.data.data()), static_cast<std::streamsize>(t.value.size() * sizeof(float)));
    if (!in) throw ArtifactError(fmt::format("checkpoint tensor '{}' is truncated", t.name));
    ckpt.tensors.push_back(std::move(t));
  }
  return ckpt;
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ArtifactError(fmt::format("cannot open checkpoint '{}'", path.string()));
  return load_checkpoint(in);
}

}  // namespace dualwalk
