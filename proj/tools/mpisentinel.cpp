#include <iostream>

#include "mpisentinel/cli.hpp"

int main(int argc, char** argv) {
    const std::vector<std::string> args(argv + 1, argv + argc);
    return mpisentinel::cli::run(args, std::cout, std::cerr, mpisentinel::cli::process_environment());
}
