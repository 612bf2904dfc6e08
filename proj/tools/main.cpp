#include "cropda/cli.hpp"

int main(int argc, char** argv) { return cropda::run_cli(argc, argv); }
