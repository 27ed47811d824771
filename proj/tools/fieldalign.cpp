#include <iostream>

#include "fieldalign/cli.hpp"

int main(int argc, char** argv) {
    return fieldalign::cli_main(argc, argv, std::cout, std::cerr);
}
