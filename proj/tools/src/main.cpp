#include "commands.hpp"

#include <iostream>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

int main(int argc, char** argv)
{
#if defined(__GLIBC__)
    // Tape buffers are large and short-lived; keep them on the heap instead
    // of mapping and unmapping pages for every node.
    mallopt(M_MMAP_THRESHOLD, 64 << 20);
    mallopt(M_TRIM_THRESHOLD, 256 << 20);
#endif
    return stda::cli::run_cli(argc, argv, std::cout, std::cerr);
}
