#include <iostream>

#include "rescap/cli.hpp"

int main(int argc, char** argv) { return rescap::cli::run(argc, argv, std::cout, std::cerr); }
