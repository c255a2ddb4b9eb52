// SPDX-License-Identifier: Apache-2.0
#include <agentml/cli.hpp>

#include <iostream>

int main(int argc, char** argv)
{
    return agentml::cli_main(std::vector<std::string>(argv, argv + argc), std::cout, std::cerr);
}
