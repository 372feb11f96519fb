// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The convoeval Authors

#include <gtest/gtest.h>

int main(int argc, char** argv) {
  ::testing::InitGoogleTest(&argc, argv);
  return RUN_ALL_TESTS();
}
