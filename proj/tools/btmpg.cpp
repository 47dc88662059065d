#include "btmpg/cli.hpp"

int main(int argc, char** argv) { return btmpg::cli_main(argc, argv); }
