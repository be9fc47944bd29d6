#include "facediff/cli.hpp"

int main(int argc, char** argv) { return facediff::run_cli(argc, argv); }
