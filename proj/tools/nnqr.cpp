#include "nnqr/commands.hpp"

int main(int argc, char** argv) { return nnqr::cli::run(argc, argv); }
