#include <iostream>

#include "parereg/app/commands.hpp"

int main(int argc, char** argv) { return parereg::app::run_cli(argc, argv, std::cout, std::cerr); }
