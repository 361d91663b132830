#include <iostream>

#include "latgen/cli.hpp"

int main(int argc, char** argv) { return latgen::cli::run(argc, argv, std::cout, std::cerr); }
