#include "mjghd/cli.hpp"

int main(int argc, char** argv) { return mjghd::cli::run(argc, argv); }
