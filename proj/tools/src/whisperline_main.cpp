#include "whisperline/cli.hpp"

int main(int argc, char** argv) { return whisperline::run_cli(argc, argv); }
