#ifndef POCUS_TEST_UTIL_HPP
#define POCUS_TEST_UTIL_HPP

#include <sys/wait.h>
#include <unistd.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace testutil {

// Scratch directory removed when the test that owns it finishes.
class TempDir {
 public:
  TempDir() {
    std::string tmpl = (std::filesystem::temp_directory_path() / "pocus_test_XXXXXX").string();
    std::vector<char> buf(tmpl.begin(), tmpl.end());
    buf.push_back('\0');
    if (mkdtemp(buf.data()) == nullptr) throw std::runtime_error("mkdtemp failed for " + tmpl);
    path_ = buf.data();
  }

  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }

  const std::string& path() const { return path_; }

  std::string file(const std::string& leaf) const {
    return (std::filesystem::path(path_) / leaf).string();
  }

 private:
  std::string path_;
};

inline void write_text(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  out << content;
  if (!out) throw std::runtime_error("cannot write " + path);
}

inline std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct CmdResult {
  int exit_code = -1;
  std::string output;  // stdout and stderr interleaved

  bool contains(const std::string& needle) const { return output.find(needle) != std::string::npos; }
};

inline CmdResult run_cmd(const std::string& cmd) {
  CmdResult res;
  FILE* pipe = popen((cmd + " 2>&1").c_str(), "r");
  if (!pipe) return res;
  char buf[4096];
  std::size_t n;
  while ((n = fread(buf, 1, sizeof(buf), pipe)) > 0) res.output.append(buf, n);
  int status = pclose(pipe);
  if (WIFEXITED(status)) res.exit_code = WEXITSTATUS(status);
  return res;
}

// The CLI binary under test. ctest injects POCUS_BIN; running the test binary
// from the build directory by hand works through the fallback.
inline std::string pocus_bin() {
  if (const char* env = std::getenv("POCUS_BIN")) return env;
  return "./pocus";
}

}  // namespace testutil

#endif  // POCUS_TEST_UTIL_HPP
