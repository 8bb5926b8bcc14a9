#include "cli.hpp"

int main(int argc, char** argv) { return gpomp::cli::run({argv + 1, argv + argc}); }
