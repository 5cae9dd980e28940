#include "hlps/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return hlps::cli::run(argc, argv, std::cout, std::cerr); }
