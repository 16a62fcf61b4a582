#include "txgnn/cli.hpp"

int main(int argc, char** argv) { return txgnn::run_cli(argc, argv); }
