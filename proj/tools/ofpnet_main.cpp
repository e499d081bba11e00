#include "ofpnet/cli.h"

int main(int argc, char** argv) { return ofpnet::cli::run(argc, argv); }
