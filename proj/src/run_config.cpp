#include "clm/cli/run_config.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <fstream>

namespace clm::cli {

void write_run_json(const std::filesystem::path& run_dir, const std::string& command,
                    const nlohmann::json& resolved,
                    const std::map<std::string, std::uint64_t>& input_hashes) {
    std::filesystem::create_directories(run_dir);
    nlohmann::json j;
    j["schema_version"] = kSchemaVersion;
    j["command"] = command;
    j["resolved"] = resolved;
    for (const auto& [name, hash] : input_hashes) j["input_hashes"][name] = hash;
    std::ofstream out(run_dir / "run.json");
    if (!out) throw RunError("cannot write run.json in " + run_dir.string());
    out << j.dump(2) << '\n';
}

RunLock::RunLock(const std::filesystem::path& run_dir) {
    std::filesystem::create_directories(run_dir);
    path_ = run_dir / ".lock";
    int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd < 0) throw RunError("run directory is locked: " + run_dir.string());
    ::close(fd);
}

RunLock::~RunLock() {
    std::error_code ec;
    std::filesystem::remove(path_, ec);
}

}  // namespace clm::cli
