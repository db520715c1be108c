#include "pptr/cli/app.hpp"

int main(int argc, char** argv) { return pptr::cli::run(std::vector<std::string>(argv, argv + argc)); }
