#include <iostream>

#include "activelex/cli.hpp"

int main(int argc, char** argv) { return activelex::run_cli(argc, argv, std::cout, std::cerr); }
