#include <doctest.h>

TEST_SUITE_BEGIN("embedding");
TEST_SUITE_END();
