#include "openrel/cli/commands.hpp"

int main(int argc, char** argv) { return openrel::cli::run(argc, argv); }
