#include "psdip/cli.hpp"

int main(int argc, char** argv) { return psdip::cli::run_cli(argc, argv); }
