#include "grasp/cli.hpp"

int main(int argc, char** argv) { return grasp::dispatch(argc, argv); }
