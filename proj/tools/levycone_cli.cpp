// Command-line front end; all logic lives in the headers.
#include "levycone/cli.hpp"

int main(int argc, char** argv) { return levycone::run_cli(argc, argv); }
