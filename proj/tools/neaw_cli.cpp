#include "neaw/cli.hpp"

int main(int argc, char** argv) { return neaw::run_cli(argc, argv); }
