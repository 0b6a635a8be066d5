#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>
#include <string>

namespace testutil {

/// Fresh, empty directory under the build tree (or the system temp dir).
inline std::filesystem::path scratch_dir(const std::string& name) {
  namespace fs = std::filesystem;
  const char* root = std::getenv("MARL_DYN_TEST_TMP");
  fs::path dir = (root ? fs::path(root) : fs::temp_directory_path() / "marl_dyn_tests") / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void spit(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

}  // namespace testutil
