#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace amelo {

/// Built-in copy of a versioned resource file (stopwords, synonym tables,
/// default rule pack, scenario queries). Throws Error{NotFound} for an
/// unknown name.
std::string_view builtin_resource(std::string_view name);

std::string read_file(const std::filesystem::path& path);

}  // namespace amelo
