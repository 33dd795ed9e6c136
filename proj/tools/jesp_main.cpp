#include "jesp/cli.hpp"

int main(int argc, char** argv) { return jesp::run_cli(argc, argv); }
