#include "cli.hpp"

int main(int argc, char** argv) { return pbds::cli::main(argc, argv); }
