#include <iostream>

#include "flythrough/cli.hpp"

int main(int argc, char** argv) { return flythrough::run_cli(argc, argv, std::cout, std::cerr); }
