#include <iostream>

#include "carbonsched/cli.hpp"

int main(int argc, char **argv) { return carbonsched::run_cli(argc, argv, std::cout, std::cerr); }
