#include <iostream>

#include "hsd_cli/cli.hpp"

int main(int argc, char** argv) {
    return hsd::cli::run({argv + 1, argv + argc}, std::cout, std::cerr);
}
