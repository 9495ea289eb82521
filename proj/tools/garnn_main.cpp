#include "garnn/cli.hpp"

int main(int argc, char** argv) { return garnn::run_cli(argc, argv); }
