#include <iostream>
#include <string>
#include <vector>

#include "wasscopos/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return wasscopos::cli_main(args, std::cout, std::cerr);
}
