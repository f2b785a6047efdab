#include "spheremap/cli.hpp"

int main(int argc, char** argv) { return spheremap::cli::run(argc, argv); }
