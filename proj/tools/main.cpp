#include <mixnet/cli.hpp>

#include <iostream>

int main(int argc, char** argv) { return mixnet::run_cli(argc, argv, std::cout, std::cerr); }
