#include "cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return sinkformer::cli::run(argc, argv, std::cout, std::cerr); }
