#pragma once

#include <string>
#include <vector>

#include "etax/config.hpp"

namespace etax::cli {

struct Artifacts {
    std::vector<std::string> files;
};

// Pipeline stages behind the CLI subcommands. Each stage locks the output
// directory, writes its artifacts atomically (files from a failed run are
// removed) and stamps everything with the config hash and seed.
Artifacts cmd_prepare(const RunConfig& config, bool synthetic);
Artifacts cmd_train(const RunConfig& config);
Artifacts cmd_evaluate(const RunConfig& config);
Artifacts cmd_explain(const RunConfig& config, const std::vector<std::int64_t>& sample_override,
                      const std::string& method_override);
Artifacts cmd_join(const RunConfig& config, const std::vector<std::string>& methods);
Artifacts cmd_scenario(const RunConfig& config);
Artifacts cmd_export(const RunConfig& config);

}  // namespace etax::cli
