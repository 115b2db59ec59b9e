#pragma once

#include <filesystem>
#include <random>
#include <string>

#include "rollcast/gradcore.hpp"

namespace testing {

inline rollcast::NumericArray random_array(const rollcast::Shape& shape, rollcast::Rng& rng, double lo = -1.0,
                                           double hi = 1.0) {
  rollcast::NumericArray a(shape);
  for (double& v : a.values()) v = rng.uniform(lo, hi);
  return a;
}

inline double dot(const rollcast::NumericArray& a, const rollcast::NumericArray& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("rollcast_" + tag + "_" + std::to_string(rd()));
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

}  // namespace testing
