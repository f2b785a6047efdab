#include <doctest.h>

TEST_SUITE_BEGIN("mapping");
TEST_SUITE_END();
