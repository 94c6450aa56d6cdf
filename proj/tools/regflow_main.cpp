#include <iostream>
#include <vector>

#include "regflow/cli.hpp"

int main(int argc, char** argv) {
    const std::vector<std::string> args(argv + 1, argv + argc);
    return rf::cli::dispatch(args, std::cout, std::cerr);
}
