#include "cli.hpp"

int main(int argc, char** argv) { return voxl::cli::run(std::vector<std::string>(argv, argv + argc)); }
