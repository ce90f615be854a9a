#pragma once

#include <filesystem>
#include <map>
#include <string>

#include <json.hpp>

#include "clm/bytes.hpp"

namespace clm::cli {

constexpr int kSchemaVersion = 1;

struct RunError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Writes <run_dir>/run.json with the fully-resolved configuration plus hashes
// of every input file the command consumed.
void write_run_json(const std::filesystem::path& run_dir, const std::string& command,
                    const nlohmann::json& resolved,
                    const std::map<std::string, std::uint64_t>& input_hashes);

// Exclusive lock on a run directory; throws RunError when already held.
class RunLock {
public:
    explicit RunLock(const std::filesystem::path& run_dir);
    ~RunLock();
    RunLock(const RunLock&) = delete;
    RunLock& operator=(const RunLock&) = delete;

private:
    std::filesystem::path path_;
};

}  // namespace clm::cli
