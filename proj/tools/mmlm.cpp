#include <iostream>

#include "mmlm/cli.hpp"

int main(int argc, char** argv) { return mmlm::run_cli(argc, argv, std::cout, std::cerr); }
