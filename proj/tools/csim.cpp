#include "csim/cli.hpp"

int main(int argc, char** argv) {
  return csim::cli::run(argc, argv);
}
