#include "artic/harness.hpp"

int main(int argc, char** argv) { return artic::harness::run_cli(argc, argv); }
