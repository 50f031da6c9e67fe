#include "nsad/cli.hpp"

int main(int argc, char** argv) { return nsad::run_cli(argc, argv); }
