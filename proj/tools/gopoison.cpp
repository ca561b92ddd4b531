#include <iostream>

#include "gopoison/cli.hpp"

int main(int argc, char** argv) { return gopoison::cli::dispatch(argc, argv, std::cin, std::cout, std::cerr); }
