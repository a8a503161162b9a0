#include <iostream>

#include "frg/dispatch.hpp"

int main(int argc, char** argv) {
    return frg::dispatch(argc, argv, std::cout, std::cerr);
}
