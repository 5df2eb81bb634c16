#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <string_view>

namespace slicelm {

// Incremental SHA-256; hex() finalizes.
class Sha256 {
 public:
  Sha256();
  ~Sha256();
  Sha256(const Sha256&) = delete;
  Sha256& operator=(const Sha256&) = delete;

  Sha256& update(std::string_view bytes);
  // Length-prefixed, so field boundaries are unambiguous.
  Sha256& field(std::string_view bytes);
  Sha256& file(const std::filesystem::path& path);
  std::string hex();

 private:
  struct State;
  std::unique_ptr<State> state_;
};

std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::filesystem::path& path);

}  // namespace slicelm
