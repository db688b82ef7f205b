#include <iostream>

#include "asl/cli.hpp"

int main(int argc, char** argv) { return asl::run_cli(argc, argv, std::cout, std::cerr); }
