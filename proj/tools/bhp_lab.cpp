#include <iostream>

#include "bhp/cli.hpp"

int main(int argc, char** argv) { return bhp::run_cli(argc, argv, std::cout, std::cerr); }
