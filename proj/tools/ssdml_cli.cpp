#include "ssdml/cli.hpp"

int main(int argc, char** argv) { return ssdml::cli::run(argc, argv); }
