#include <iostream>

#include "unisoma/cli.hpp"

int main(int argc, char** argv) { return unisoma::run_cli(argc, argv, std::cout, std::cerr); }
