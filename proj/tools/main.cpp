#include "cli.hpp"

int main(int argc, char** argv) { return panoalign::cli::run(argc, argv); }
