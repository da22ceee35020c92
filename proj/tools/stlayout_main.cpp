#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "stlayout/config.hpp"
#include "stlayout/runner.hpp"
#include "stlayout/version.hpp"

namespace {

void report(const char* category, const std::exception& e) {
  std::cerr << "stlayout: " << category << ": " << e.what() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"layout-guided video editing toolkit"};
  app.set_version_flag("--version", stlayout::version_string);
  app.require_subcommand(1);

  std::string spec_path;
  std::string config_path;
  std::string dir_first;
  std::string dir_second;
  std::string out_dir;

  CLI::App* gen = app.add_subcommand("generate-fixture",
                                     "synthesize a moving-shape layout + feature video");
  gen->add_option("spec", spec_path, "fixture spec JSON file")->required();
  gen->add_option("out_dir", out_dir, "directory for layout PGMs and source.stlv")->required();

  CLI::App* run = app.add_subcommand("run", "run one edit from a config file");
  run->add_option("config", config_path, "run config JSON file")->required();

  CLI::App* cmp =
      app.add_subcommand("compare", "diff the metrics and heatmaps of two run directories");
  cmp->add_option("dir_first", dir_first, "baseline run output directory")->required();
  cmp->add_option("dir_second", dir_second, "comparison run output directory")->required();
  cmp->add_option("out_dir", out_dir, "directory for comparison.json and delta images")
      ->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    // Help and version land here with code 0; anything else is bad usage.
    return code == 0 ? 0 : 2;
  }

  try {
    if (gen->parsed()) {
      stlayout::generate_fixture_files(stlayout::load_fixture_spec(spec_path), out_dir);
    } else if (run->parsed()) {
      stlayout::run_from_config(stlayout::load_run_config(config_path));
    } else if (cmp->parsed()) {
      stlayout::compare_directories(dir_first, dir_second, out_dir);
    }
  } catch (const stlayout::io_error& e) {
    report("io error", e);
    return 3;
  } catch (const stlayout::numeric_error& e) {
    report("numeric error", e);
    return 4;
  } catch (const stlayout::error& e) {
    report("invalid input", e);
    return 2;
  } catch (const std::exception& e) {
    report("error", e);
    return 1;
  }
  return 0;
}
