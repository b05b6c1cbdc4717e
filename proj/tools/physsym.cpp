#include "physsym/eval.hpp"

#include <iostream>

int main(int argc, char** argv) { return physsym::run_cli(argc, argv, std::cout, std::cerr); }
