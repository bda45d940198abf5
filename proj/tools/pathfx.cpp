#include "pathfx/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return pathfx::run_cli(argc, argv, std::cout, std::cerr); }
