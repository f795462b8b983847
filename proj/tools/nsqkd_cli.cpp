#include "cli_app.hpp"

int main(int argc, char** argv) { return nsqkd::cli::run(argc, argv); }
