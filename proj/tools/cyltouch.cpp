#include "cyltouch/cli.hpp"

int main(int argc, char** argv)
{
    return cyltouch::run_cli(argc, argv);
}
