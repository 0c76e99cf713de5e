#include <iostream>

#include "egoqa/cli.hpp"

int main(int argc, char** argv) { return egoqa::run_cli(argc, argv, std::cout, std::cerr); }
