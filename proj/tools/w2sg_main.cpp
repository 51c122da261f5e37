#include "w2sg/cli.hpp"

int main(int argc, char** argv) { return w2sg::run_cli(argc, argv); }
