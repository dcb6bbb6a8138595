#include "confae/cli/commands.hpp"

#include <iostream>

int main(int argc, char** argv) { return confae::cli::run(argc, argv, std::cout, std::cerr); }
