#include <iostream>

#include "microsim/cli.hpp"

int main(int argc, char** argv) { return microsim::cli::run(argc, argv, std::cout, std::cerr); }
