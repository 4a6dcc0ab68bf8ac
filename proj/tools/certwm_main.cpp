#include "certwm/cli.hpp"

int main(int argc, char** argv) { return certwm::cli_main(argc, argv); }
