#include <doctest.h>

TEST_SUITE_BEGIN("sim");
TEST_SUITE_END();
