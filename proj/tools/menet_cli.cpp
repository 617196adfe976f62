#include <iostream>

#include "menet/cli.hpp"

int main(int argc, char** argv) { return menet::run_cli(argc, argv, std::cout, std::cerr); }
