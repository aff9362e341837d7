#include "poisonlab/cli.hpp"

int main(int argc, char** argv) { return poisonlab::cli_main(argc, argv); }
