#include <iostream>

#include "isnpg/commands.hpp"

int main(int argc, char** argv) { return isnpg::cli_main(argc, argv, std::cout, std::cerr); }
