#include <CLI11.hpp>
#include <iostream>

#include "lalg/config.hpp"
#include "lalg/expr.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Lie algebroid fibrations: transgression, monodromy and path decomposition"};
  app.require_subcommand(1);

  std::string run_path, describe_path, out_dir = "reports";
  std::vector<std::string> overrides;

  auto* run = app.add_subcommand("run", "Run every task in a config and write JSON reports");
  run->add_option("config", run_path, "Config file")->required();
  run->add_option("--set", overrides, "Override section.key=value (repeatable)");
  run->add_option("--out", out_dir, "Report directory")->capture_default_str();

  auto* describe = app.add_subcommand("describe", "Print the entities and task plan of a config");
  describe->add_option("config", describe_path, "Config file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    if (*run) return lalg::run_config(lalg::load_config(run_path, overrides), out_dir, std::cout);
    lalg::Workspace ws(lalg::load_config(describe_path));
    ws.describe(std::cout);
    return 0;
  } catch (const lalg::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const lalg::ParseError& e) {
    std::cerr << "parse error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
