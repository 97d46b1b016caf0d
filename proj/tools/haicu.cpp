#include "haicu/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return haicu::run_cli(argc, argv, std::cout, std::cerr); }
