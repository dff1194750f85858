#include "amelo/resources.hpp"

#include <fstream>
#include <map>
#include <sstream>

#include "amelo/error.hpp"

namespace amelo {
namespace detail {
const std::map<std::string, std::string_view>& embedded_resources();
}

std::string_view builtin_resource(std::string_view name) {
  const auto& table = detail::embedded_resources();
  const auto it = table.find(std::string(name));
  if (it == table.end()) {
    throw Error(ErrorCode::NotFound, "no built-in resource named " + std::string(name));
  }
  return it->second;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace amelo
