#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <unistd.h>

#include "toolcall/trace_store.hpp"

namespace toolcall::testkit {

class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("toolcall-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline TraceRecord make_record(std::string id, std::uint64_t seq, double nt, double at, bool called = false) {
  TraceRecord r;
  r.instance_id = std::move(id);
  r.seq_index = seq;
  r.task_name = "t";
  r.model_id = "m";
  r.s_no_tool = nt;
  r.s_always_tool = at;
  r.self_called = called;
  r.self_call_count = called ? 1 : 0;
  return r;
}

// Scores on the 1/1024 grid so sums of a few dozen are exact in binary64.
inline TraceSet dyadic_trace(std::size_t n, std::mt19937_64& gen, int levels = 1024) {
  std::uniform_int_distribution<int> score(0, levels);
  std::bernoulli_distribution coin(0.5);
  TraceSet ts;
  for (std::size_t i = 0; i < n; ++i) {
    const double nt = score(gen) / static_cast<double>(levels);
    const double at = score(gen) / static_cast<double>(levels);
    ts.records.push_back(make_record("i" + std::to_string(i), i, nt, at, coin(gen)));
  }
  return ts;
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

inline void write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

}  // namespace toolcall::testkit
