#ifndef METANO_IO_HPP
#define METANO_IO_HPP

#include "meta.hpp"
#include "tasks.hpp"

#include <map>
#include <stdexcept>
#include <string>

namespace metano {

// malformed header, checksum mismatch, unknown config key, ...
struct FormatError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Binary dataset/checkpoint container, magic "MNO1", little-endian
// fixed-width header fields, float64 payload. Checkpoints carry a trailing
// FNV-1a 64-bit checksum over everything after the 12-byte preamble.
void save_dataset(const std::string& path, const TaskDataset& ds);
TaskDataset load_dataset(const std::string& path);

void save_checkpoint(const std::string& path, const IFNOModel& model);
IFNOModel load_checkpoint_model(const std::string& path);

void save_meta_state(const std::string& path, const MetaState& state);
MetaState load_meta_state(const std::string& path);

std::uint64_t fnv1a(const unsigned char* data, std::size_t n);

// key=value configuration text, '#' starts a comment, blank lines ignored;
// duplicate keys rejected
std::map<std::string, std::string> parse_kv(const std::string& text);
std::map<std::string, std::string> parse_kv_file(const std::string& path);

} // namespace metano

#endif
