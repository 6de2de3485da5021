#include <iostream>
#include <string>
#include <vector>

#include "digfuse/cli.hpp"

namespace {

void usage(std::ostream& out) {
    out << "usage: digfuse <command> [options]\n"
           "\n"
           "commands:\n"
           "  fuse             fuse modality images with gain-weighted guidance\n"
           "  dig-trace        cumulative information-gain curves with seed bands\n"
           "  metrics          fusion quality metrics report\n"
           "  validate-theory  numerical checks of the weighting-mechanism bound\n"
           "\n"
           "run 'digfuse <command> --help' for the command's options\n";
}

}  // namespace

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    if (args.empty()) {
        usage(std::cerr);
        return digfuse::kExitConfig;
    }
    std::string cmd = args.front();
    std::vector<std::string> rest(args.begin() + 1, args.end());
    if (cmd == "fuse") return digfuse::cmd_fuse(rest);
    if (cmd == "dig-trace") return digfuse::cmd_dig_trace(rest);
    if (cmd == "metrics") return digfuse::cmd_metrics(rest);
    if (cmd == "validate-theory") return digfuse::cmd_validate_theory(rest);
    if (cmd == "--help" || cmd == "-h" || cmd == "help") {
        usage(std::cout);
        return digfuse::kExitOk;
    }
    std::cerr << "unknown command '" << cmd << "'\n\n";
    usage(std::cerr);
    return digfuse::kExitConfig;
}
