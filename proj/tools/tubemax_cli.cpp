#include "tubemax/cli.hpp"

int main(int argc, char** argv) { return tubemax::run_cli(argc, argv); }
