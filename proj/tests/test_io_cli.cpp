#include <doctest.h>

TEST_SUITE_BEGIN("io_cli");
TEST_SUITE_END();
