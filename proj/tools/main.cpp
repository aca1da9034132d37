#include <iostream>

#include "skillstack/cli.hpp"

int main(int argc, char** argv) {
    return skillstack::run_cli(argc, argv, std::cout, std::cerr);
}
