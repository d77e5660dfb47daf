#pragma once

#include <filesystem>
#include <string>

namespace promptrec {

// Entry point of the promptrec tool; returns the process exit code
// (0 ok, 1 usage/contract, 2 config, 3 checkpoint, 4 data, 5 numeric).
int run_cli(int argc, const char* const* argv);

// Hex SHA-256 of a file's bytes.
std::string file_sha256(const std::filesystem::path& path);

}  // namespace promptrec
