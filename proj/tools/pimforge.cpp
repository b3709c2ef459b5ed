#include "pimforge/cli.hpp"

int main(int argc, char** argv) { return pimforge::cli::run(argc, argv); }
