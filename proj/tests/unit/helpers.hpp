#pragma once

#include <filesystem>
#include <random>
#include <string>

#include <gtest/gtest.h>

#include "inspectlab/corpus.hpp"

namespace testutil {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    std::string name = "inspectlab_" + tag;
    if (info) name += std::string("_") + info->test_suite_name() + "_" + info->name();
    path_ = std::filesystem::temp_directory_path() / name;
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() { std::filesystem::remove_all(path_); }
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& s) const { return path_ / s; }

 private:
  std::filesystem::path path_;
};

inline inspectlab::corpus::CorpusSpec small_spec(int good, int dp, int ip, int size = 32, std::uint64_t seed = 3) {
  inspectlab::corpus::CorpusSpec s;
  s.image_size = size;
  s.counts = {{inspectlab::corpus::LabelClass::good, good},
              {inspectlab::corpus::LabelClass::double_print, dp},
              {inspectlab::corpus::LabelClass::interrupted_print, ip}};
  s.seed = seed;
  return s;
}

}  // namespace testutil
