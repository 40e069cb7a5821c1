#include <iostream>

#include "etd/cli.hpp"

int main(int argc, char** argv) {
    return etd::cli::run(std::vector<std::string>(argv + 1, argv + argc), std::cout, std::cerr);
}
