#include "m3fc/cli.hpp"

int main(int argc, char** argv) { return m3fc::cli_main(argc, argv); }
