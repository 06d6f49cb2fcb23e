#include <iostream>

#include "empsoa/cli.hpp"

int main(int argc, char** argv) { return empsoa::run_cli(argc, argv, std::cout, std::cerr); }
