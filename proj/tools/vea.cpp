#include <iostream>

#include "vea/cli/commands.hpp"

int main(int argc, char** argv) { return vea::cli::run(argc, argv, std::cout, std::cerr); }
