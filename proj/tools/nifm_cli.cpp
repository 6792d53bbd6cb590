#include <iostream>

#include "nifm/cli.hpp"

int main(int argc, char** argv) { return nifm::run_cli(argc, argv, std::cout, std::cerr); }
