#include "nearid/cli.hpp"

int main(int argc, char** argv) { return nearid::run_cli(argc, argv); }
