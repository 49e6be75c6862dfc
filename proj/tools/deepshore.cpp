#include <iostream>
#include <string>
#include <vector>

#include "deepshore/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return deepshore::run_cli(args, std::cout, std::cerr);
}
