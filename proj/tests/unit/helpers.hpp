#pragma once

#include <filesystem>
#include <string>

#include <gtest/gtest.h>

#include "cubic/rng.hpp"
#include "cubic/tensor.hpp"

namespace cubic::testing {

inline Tensor random_tensor(Shape shape, Rng& rng, double scale = 1.0) {
  Tensor t(std::move(shape));
  for (float& v : t.data()) v = static_cast<float>(scale * rng.normal());
  return t;
}

// Fresh per-test directory under the system temp dir, removed afterwards.
class TempDir {
 public:
  TempDir() {
    static int counter = 0;
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    path_ = std::filesystem::temp_directory_path() / ("cubic_" + std::string(info->test_suite_name()) + "_" +
                                                      info->name() + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() { std::filesystem::remove_all(path_); }
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace cubic::testing
