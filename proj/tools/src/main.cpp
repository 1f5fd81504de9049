#include "stnet_cli/cli.hpp"

int main(int argc, char** argv) { return stnet::cli::run(argc, argv); }
