#include <doctest.h>

TEST_SUITE_BEGIN("vmf");
TEST_SUITE_END();
