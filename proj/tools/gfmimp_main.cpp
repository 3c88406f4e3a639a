#include "gfmimp/cli.hpp"

int main(int argc, char** argv) { return gfmimp::run_cli(argc, argv); }
