#include "qp/cli.hpp"

int main(int argc, char** argv) { return qp::run_cli(argc, argv); }
