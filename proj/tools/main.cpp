#include <vector>

#include "dipro/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return dipro::cli::run(args);
}
