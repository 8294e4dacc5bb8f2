#include "cogdiag/cli.hpp"

int main(int argc, char** argv) { return cogdiag::cli_run(argc, argv); }
