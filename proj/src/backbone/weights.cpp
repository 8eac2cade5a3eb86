#include "cdet/backbone/weights.hpp"

#include <curl/curl.h>
#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <cstdio>
#include <cstdlib>
#include <fstream>

#include "cdet/error.hpp"
#include "cdet/io/safetensors.hpp"
#include "cdet/io/sha256.hpp"

namespace cdet::weights {

namespace fs = std::filesystem;

namespace {

constexpr const char* kWeightsFile = "model.safetensors";
constexpr const char* kPinFile = "model.sha256";

// Serializes writers of one cache entry across processes.
class FileLock {
 public:
  explicit FileLock(const fs::path& path) {
    fd_ = ::open(path.c_str(), O_CREAT | O_RDWR, 0644);
    if (fd_ < 0) fail(Errc::io_error, "cannot open lock file " + path.string());
    if (::flock(fd_, LOCK_EX) != 0) {
      ::close(fd_);
      fail(Errc::io_error, "cannot lock " + path.string());
    }
  }
  ~FileLock() {
    ::flock(fd_, LOCK_UN);
    ::close(fd_);
  }
  FileLock(const FileLock&) = delete;
  FileLock& operator=(const FileLock&) = delete;

 private:
  int fd_ = -1;
};

std::string read_pin(const fs::path& dir) {
  std::ifstream in(dir / kPinFile);
  std::string digest;
  in >> digest;
  return digest;
}

void write_pin(const fs::path& dir, const std::string& digest) {
  std::ofstream out(dir / kPinFile, std::ios::trunc);
  out << digest << "\n";
  if (!out) fail(Errc::io_error, "cannot write pin in " + dir.string());
}

// Accepts `file` as the entry's weights if its digest matches the manifest
// (when the manifest has one); returns the digest.
std::string check_against_manifest(const WeightSource& source, const fs::path& file) {
  const auto digest = io::sha256_file(file);
  if (source.sha256 && *source.sha256 != digest)
    fail(Errc::integrity_error, source.identifier + ": sha256 " + digest + " does not match manifest " + *source.sha256);
  return digest;
}

size_t write_cb(char* data, size_t size, size_t n, void* user) {
  return std::fwrite(data, size, n, static_cast<std::FILE*>(user)) * size;
}

void download(const std::string& uri, const fs::path& dest) {
  std::FILE* out = std::fopen(dest.c_str(), "wb");
  if (!out) fail(Errc::io_error, "cannot write " + dest.string());
  CURL* curl = curl_easy_init();
  if (!curl) {
    std::fclose(out);
    fail(Errc::environment_error, "libcurl initialization failed");
  }
  char err[CURL_ERROR_SIZE] = {0};
  curl_easy_setopt(curl, CURLOPT_URL, uri.c_str());
  curl_easy_setopt(curl, CURLOPT_FOLLOWLOCATION, 1L);
  curl_easy_setopt(curl, CURLOPT_FAILONERROR, 1L);
  curl_easy_setopt(curl, CURLOPT_CONNECTTIMEOUT, 30L);
  curl_easy_setopt(curl, CURLOPT_WRITEFUNCTION, write_cb);
  curl_easy_setopt(curl, CURLOPT_WRITEDATA, out);
  curl_easy_setopt(curl, CURLOPT_ERRORBUFFER, err);
  const auto rc = curl_easy_perform(curl);
  curl_easy_cleanup(curl);
  std::fclose(out);
  if (rc != CURLE_OK) {
    fs::remove(dest);
    fail(Errc::weights_unavailable, "download of " + uri + " failed: " + (err[0] ? err : curl_easy_strerror(rc)));
  }
}

}  // namespace

fs::path default_cache_root() {
  if (const char* env = std::getenv("CDET_CACHE"); env && *env) return env;
  if (const char* home = std::getenv("HOME"); home && *home) return fs::path(home) / ".cache" / "cdet";
  return fs::path(".cdet-cache");
}

fs::path entry_dir(const WeightSource& source, const fs::path& root) {
  std::string name;
  for (char c : source.identifier) name += (c == '/') ? std::string("__") : std::string(1, c);
  return root / name;
}

fs::path resolve(const WeightSource& source, const fs::path& root) {
  const auto dir = entry_dir(source, root);
  const auto file = dir / kWeightsFile;
  if (!fs::exists(file))
    fail(Errc::weights_unavailable, source.identifier + " is not cached under " + root.string() +
                                        "; run `cdet backbones fetch` first");
  const auto pin = read_pin(dir);
  if (pin.empty() && !source.sha256)
    fail(Errc::integrity_error, source.identifier + ": cached file has no pinned digest; re-import it");
  const auto digest = check_against_manifest(source, file);
  if (!pin.empty() && pin != digest)
    fail(Errc::integrity_error, source.identifier + ": sha256 " + digest + " does not match pinned " + pin);
  return file;
}

fs::path fetch(const WeightSource& source, const fs::path& root) {
  const auto dir = entry_dir(source, root);
  fs::create_directories(dir);
  FileLock lock(dir / ".lock");
  if (fs::exists(dir / kWeightsFile)) return resolve(source, root);
  const auto partial = dir / "model.safetensors.partial";
  download(source.uri, partial);
  std::string digest;
  try {
    digest = check_against_manifest(source, partial);
  } catch (...) {
    fs::remove(partial);
    throw;
  }
  fs::rename(partial, dir / kWeightsFile);
  write_pin(dir, digest);
  return dir / kWeightsFile;
}

fs::path import_file(const WeightSource& source, const fs::path& file, const fs::path& root) {
  if (!fs::exists(file)) fail(Errc::io_error, "no such file " + file.string());
  io::read_safetensors(file);  // rejects anything that is not a readable archive
  const auto digest = check_against_manifest(source, file);
  const auto dir = entry_dir(source, root);
  fs::create_directories(dir);
  FileLock lock(dir / ".lock");
  const auto partial = dir / "model.safetensors.partial";
  fs::copy_file(file, partial, fs::copy_options::overwrite_existing);
  fs::rename(partial, dir / kWeightsFile);
  write_pin(dir, digest);
  return dir / kWeightsFile;
}

LoadReport load_encoder(EncoderImpl& encoder, const fs::path& file, const std::string& prefix) {
  const auto archive = io::read_safetensors(file);
  LoadReport report;
  size_t matched = 0;
  torch::NoGradGuard guard;
  for (auto& item : encoder.named_parameters(true)) {
    const auto it = archive.tensors.find(prefix + item.key());
    if (it == archive.tensors.end()) {
      if (!encoder.optional_in_checkpoint(item.key()))
        fail(Errc::integrity_error, file.string() + " lacks parameter " + prefix + item.key());
      report.absent_optional.push_back(item.key());
      continue;
    }
    if (it->second.sizes() != item.value().sizes())
      fail(Errc::integrity_error, "shape of " + it->first + " disagrees with the encoder");
    item.value().copy_(it->second.to(item.value().dtype()));
    ++report.loaded;
    ++matched;
  }
  for (auto& item : encoder.named_buffers(true)) {
    const auto it = archive.tensors.find(prefix + item.key());
    if (it == archive.tensors.end()) continue;
    ++matched;
    // Index tables are recomputed from the window size; keep our own on mismatch.
    if (it->second.sizes() != item.value().sizes()) {
      if (item.key().find("relative_") != std::string::npos) continue;
      fail(Errc::integrity_error, "shape of " + it->first + " disagrees with the encoder");
    }
    item.value().copy_(it->second.to(item.value().dtype()));
  }
  report.ignored = archive.tensors.size() - matched;

  const auto probe = encoder.probe_parameter();
  const auto params = encoder.named_parameters(true);
  const auto* mine = params.find(probe);
  const auto it = archive.tensors.find(prefix + probe);
  if (!mine || it == archive.tensors.end() || !torch::equal(*mine, it->second.to(mine->dtype())))
    fail(Errc::integrity_error, "probe tensor " + probe + " differs from the checkpoint after loading");
  return report;
}

}  // namespace cdet::weights
