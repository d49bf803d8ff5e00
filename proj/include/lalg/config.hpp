#ifndef LALG_CONFIG_HPP
#define LALG_CONFIG_HPP

// Sectioned key-value configs: [params], [chart:NAME], [algebroid:NAME],
// [fibration:NAME], [cube:NAME] and [task:NAME]. String values may use ${p}
// for entries of [params]. Lists are comma separated, matrix rows are
// separated by semicolons.

#include <boost/property_tree/ptree.hpp>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <json.hpp>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "lalg/algebroid.hpp"
#include "lalg/cube.hpp"
#include "lalg/fibration.hpp"

namespace lalg {

/// Parse and validation problems in a config; the message names the file
/// position or the offending entity.
class ConfigError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Config {
  std::filesystem::path path;
  boost::property_tree::ptree tree;
  std::vector<std::string> overrides;
  std::string hash;  // FNV-1a of the file bytes and the overrides, hex

  /// Sections of one kind, in file order, as (name, section).
  std::vector<std::pair<std::string, const boost::property_tree::ptree*>> sections(const std::string& kind) const;
};

/// Reads the file, applies `section.key=value` overrides, then expands ${param}.
Config load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides = {});

/// Builds entities on demand (with cycle detection) and runs tasks.
class Workspace {
 public:
  explicit Workspace(Config cfg);

  const Config& config() const { return cfg_; }

  /// Checks every reference and builds charts, algebroids and fibrations.
  /// Cubes are only checked for references; they are built when a task needs them.
  void validate();

  const Chart& chart(const std::string& name);
  const Algebroid& algebroid(const std::string& name);
  const Fibration& fibration(const std::string& name);
  const Cube& cube(const std::string& name);

  struct TaskResult {
    std::string name;
    bool pass = false;
    nlohmann::json report;
  };
  TaskResult run_task(const std::string& name);
  std::vector<std::string> task_names() const;

  /// Entity table for `describe`.
  void describe(std::ostream& os);

 private:
  const boost::property_tree::ptree& section(const std::string& kind, const std::string& name) const;
  void enter(const std::string& key);
  void leave(const std::string& key);

  Config cfg_;
  std::map<std::string, Chart> charts_;
  std::map<std::string, Algebroid> algebroids_;
  std::map<std::string, Fibration> fibrations_;
  std::map<std::string, Cube> cubes_;
  std::vector<std::string> building_;
};

/// Runs every task in file order and writes one report per task into out_dir.
/// Returns 0 when every task passes, 1 otherwise.
int run_config(const Config& cfg, const std::filesystem::path& out_dir, std::ostream& log);

/// Writes text to path through a temporary file and a rename.
void write_atomically(const std::filesystem::path& path, const std::string& text);

}  // namespace lalg

#endif  // LALG_CONFIG_HPP
