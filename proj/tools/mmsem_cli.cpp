#include <string>
#include <vector>

#include "mmsem/cli.hpp"

int main(int argc, char** argv) {
  return mmsem::cli::main(std::vector<std::string>(argv + 1, argv + argc));
}
