#pragma once

#include <filesystem>

#include "cogdiag/dataset.hpp"

namespace cogdiag {

// Command-line front end. Parses argv (argv[0] is the program name),
// dispatches one subcommand, and maps failures onto exit codes: 0 on
// success, 1 for usage, validation, or configuration problems, 2 for
// I/O and transport failures. Every run writes a manifest.json next to
// its outputs recording the resolved configuration, the seed, digests
// of the inputs, the output paths, and the wall-clock duration.
int cli_run(int argc, const char* const* argv);

// On-disk dataset layout shared by the subcommands: train/valid/test
// .jsonl plus indices.json, which freezes the dense entity order so a
// split survives the trip through separate processes.
void save_dataset_dir(const std::filesystem::path& dir, const DatasetSplit& split);
DatasetSplit load_dataset_dir(const std::filesystem::path& dir);

}  // namespace cogdiag
