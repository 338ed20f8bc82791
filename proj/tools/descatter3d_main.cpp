#include <string>
#include <vector>

#include "descatter3d/commands.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return descatter3d::dispatch(args);
}
