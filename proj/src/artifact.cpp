#include "dualwalk/artifact.hpp"

#include <chrono>
#include <ctime>
#include <fstream>
#include <iterator>

#include <fmt/format.h>
#include <openssl/evp.h>

#include "dualwalk/error.hpp"

namespace dualwalk {

namespace {

std::string to_hex(const unsigned char* data, unsigned int size) {
  std::string out;
  out.reserve(size * 2);
  for (unsigned int i = 0; i < size; ++i) out += fmt::format("{:02x}", data[i]);
  return out;
}

class Digest {
 public:
  Digest() : ctx_(EVP_MD_CTX_new()) {
    if (!ctx_ || EVP_DigestInit_ex(ctx_, EVP_sha256(), nullptr) != 1) throw ArtifactError("SHA-256 unavailable");
  }
  ~Digest() { EVP_MD_CTX_free(ctx_); }
  Digest(const Digest&) = delete;
  Digest& operator=(const Digest&) = delete;

  void update(const char* data, std::size_t size) { EVP_DigestUpdate(ctx_, data, size); }
  std::string hex() {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx_, md, &len);
    return to_hex(md, len);
  }

 private:
  EVP_MD_CTX* ctx_;
};

}  // namespace

std::string sha256_hex(std::string_view bytes) {
  Digest d;
  d.update(bytes.data(), bytes.size());
  return d.hex();
}

std::string sha256_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ArtifactError(fmt::format("cannot read '{}'", path.string()));
  Digest d;
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof(buf));
    d.update(buf, static_cast<std::size_t>(in.gcount()));
  }
  return d.hex();
}

std::filesystem::path make_run_dir(const std::filesystem::path& base, const std::string& hash8) {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char stamp[32];
  std::strftime(stamp, sizeof(stamp), "%Y%m%d-%H%M%S", &tm);
  std::filesystem::create_directories(base);
  std::filesystem::path dir = base / fmt::format("{}-{}", stamp, hash8);
  for (int i = 1; std::filesystem::exists(dir); ++i) dir = base / fmt::format("{}-{}-{}", stamp, hash8, i);
  std::filesystem::create_directories(dir / "manifests");
  return dir;
}

void Manifest::add_input(const std::string& name, const std::filesystem::path& path) {
  inputs[name] = {{"path", std::filesystem::absolute(path).string()}, {"sha256", sha256_file(path)}};
}

void Manifest::add_output(const std::string& name, const std::filesystem::path& path) {
  outputs[name] = {{"path", std::filesystem::absolute(path).string()}, {"sha256", sha256_file(path)}};
}

void Manifest::verify_inputs() const {
  for (const auto& [name, entry] : inputs.items()) {
    const std::filesystem::path path = entry.at("path").get<std::string>();
    if (!std::filesystem::exists(path)) throw ArtifactError(fmt::format("input '{}' is missing: {}", name, path.string()));
    const auto actual = sha256_file(path);
    const auto expected = entry.at("sha256").get<std::string>();
    if (actual != expected) {
      throw ArtifactError(fmt::format("input '{}' changed since the manifest was written ({}: expected {}, found {})",
                                      name, path.string(), expected.substr(0, 12), actual.substr(0, 12)));
    }
  }
}

nlohmann::json Manifest::to_json() const {
  return {{"stage", stage}, {"version", std::string(kVersion)}, {"seed", seed}, {"config", config},
          {"inputs", inputs}, {"outputs", outputs}, {"extra", extra}};
}

Manifest Manifest::from_json(const nlohmann::json& j) {
  Manifest m;
  try {
    m.stage = j.at("stage").get<std::string>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.config = j.at("config");
    m.inputs = j.at("inputs");
    m.outputs = j.at("outputs");
    if (j.contains("extra")) m.extra = j.at("extra");
  } catch (const nlohmann::json::exception& e) {
    throw ArtifactError(fmt::format("malformed manifest: {}", e.what()));
  }
  return m;
}

void Manifest::write(const std::filesystem::path& path) const {
  std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw ArtifactError(fmt::format("cannot write '{}'", path.string()));
  out << to_json().dump(2) << '\n';
}

Manifest Manifest::read(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ArtifactError(fmt::format("cannot open manifest '{}'", path.string()));
  try {
    return from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw ArtifactError(fmt::format("manifest '{}' is not valid JSON: {}", path.string(), e.what()));
  }
}

}  // namespace dualwalk
