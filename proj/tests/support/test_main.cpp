#include <gtest/gtest.h>

#include "rgc/common/runtime.hpp"

int main(int argc, char** argv) {
  rgc::tune_allocator();
  ::testing::InitGoogleTest(&argc, argv);
  return RUN_ALL_TESTS();
}
