#include "vlafp/cli.hpp"

int main(int argc, char** argv) { return vlafp::cli::dispatch(argc, argv); }
