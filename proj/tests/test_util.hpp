#pragma once

#include <cstdio>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "selb/rng.hpp"
#include "selb/tensor.hpp"

namespace testutil {

inline selb::Tensor rand_tensor(selb::Rng& rng, const selb::Shape& shape, double lo, double hi,
                                bool requires_grad = false) {
  std::vector<double> data(selb::shape_size(shape));
  for (auto& v : data) v = rng.uniform(lo, hi);
  return selb::Tensor::from_data(shape, std::move(data), requires_grad);
}

// Uniform values kept at least `margin` away from zero (for kinked ops).
inline selb::Tensor rand_tensor_away_from_zero(selb::Rng& rng, const selb::Shape& shape,
                                               double margin, double spread,
                                               bool requires_grad = false) {
  std::vector<double> data(selb::shape_size(shape));
  for (auto& v : data) {
    double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
    v = sign * (margin + rng.uniform(0.0, spread));
  }
  return selb::Tensor::from_data(shape, std::move(data), requires_grad);
}

struct CmdResult {
  int exit_code = -1;
  std::string output;  // stdout and stderr interleaved
};

inline CmdResult run_cmd(const std::string& cmd) {
  CmdResult r;
  std::string full = cmd + " 2>&1";
  FILE* pipe = ::popen(full.c_str(), "r");
  if (!pipe) throw std::runtime_error("popen failed for: " + cmd);
  char buf[4096];
  size_t n;
  while ((n = std::fread(buf, 1, sizeof buf, pipe)) > 0) r.output.append(buf, n);
  int status = ::pclose(pipe);
  r.exit_code = (status >= 0 && WIFEXITED(status)) ? WEXITSTATUS(status) : -1;
  return r;
}

// Fresh empty scratch directory under the process working dir (the build
// tree when run through ctest).
inline std::string fresh_dir(const std::string& tag) {
  std::filesystem::path p = std::filesystem::current_path() / "scratch" / tag;
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p.string();
}

inline std::string read_file(const std::string& path) {
  FILE* f = std::fopen(path.c_str(), "rb");
  if (!f) throw std::runtime_error("cannot open " + path);
  std::string out;
  char buf[4096];
  size_t n;
  while ((n = std::fread(buf, 1, sizeof buf, f)) > 0) out.append(buf, n);
  std::fclose(f);
  return out;
}

}  // namespace testutil
