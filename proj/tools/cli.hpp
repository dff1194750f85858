#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace amelo::cli {

enum class Subcommand { Extract, Ingest, BuildIndex, Query, Bench, Serve };

struct Command {
  Subcommand subcommand = Subcommand::Query;

  std::string store;
  std::optional<int> port;
  std::string text;
  std::string form_file;
  std::string vector_file;
  std::size_t k = 5;
  std::vector<std::string> methods;
  std::vector<std::size_t> sizes;
  std::size_t repetitions = 1;
  std::string queries_file;
  bool json = false;
  bool csv = false;

  std::string rules;
  std::string lexicon;
  bool llm = false;
  std::string llm_endpoint;
  std::string llm_model;
  std::string pmcid;

  std::string cases_file;
  std::string embeddings_file;
  std::string out;
  std::vector<std::string> inputs;
};

struct ParseResult {
  std::optional<Command> command;  // set when parsing succeeded
  int exit_code = 0;               // 0 for --help, 2 for usage errors
  std::string message;             // help text or usage error
};

/// Arguments exclude the program name.
ParseResult parse_args(const std::vector<std::string>& args);

/// 0 on success, 1 on an operation error.
int run(const Command& command, std::ostream& out, std::ostream& err);

/// parse_args + run; what main() calls.
int main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace amelo::cli
