#include <doctest.h>

TEST_SUITE_BEGIN("regression");
TEST_SUITE_END();
