#include "topictrail/cli.hpp"

int main(int argc, char** argv) { return topictrail::run_cli(argc, argv); }
