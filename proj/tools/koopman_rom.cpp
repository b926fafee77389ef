// koopman_rom: simulate | rom | reconstruct | vorticity
//
// Exit codes: 0 success, 1 mode selection did not reach epsilon,
// 2 solver or decomposition failure, 3 I/O, parse or argument failure.

#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "koopman/koopman.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kNotConverged = 1;
constexpr int kSolverFailure = 2;
constexpr int kIoFailure = 3;

struct Options {
  std::string config;
  std::optional<std::string> out;
  std::optional<double> eps;
  std::string time = "50h";
  std::optional<std::string> field;
};

koopman::ExperimentConfig load_config(const Options& opt) {
  koopman::ExperimentConfig cfg =
      opt.config.empty() ? koopman::ExperimentConfig{} : koopman::parse_config(opt.config);
  if (opt.out) cfg.output_dir = *opt.out;
  if (opt.eps) cfg.epsilon = *opt.eps;
  if (opt.field) cfg.fields = {koopman::field_tag_from_string(*opt.field)};
  koopman::validate(cfg);
  return cfg;
}

int run(const std::string& command, const Options& opt) {
  const koopman::ExperimentConfig cfg = load_config(opt);
  if (command == "simulate") {
    koopman::cmd_simulate(cfg, std::cout);
    return kOk;
  }
  if (command == "rom") {
    const auto report = koopman::cmd_rom(cfg, std::cout);
    return report.all_converged() ? kOk : kNotConverged;
  }
  if (command == "reconstruct") {
    const koopman::FieldTag tag =
        opt.field ? koopman::field_tag_from_string(*opt.field) : koopman::FieldTag::h;
    koopman::cmd_reconstruct(cfg, tag, opt.time, std::cout);
    return kOk;
  }
  koopman::cmd_vorticity(cfg, opt.time, std::cout);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Koopman-mode reduced-order models of a rotating shallow-water flow"};
  app.require_subcommand(1, 1);

  Options opt;
  auto add_common = [&opt](CLI::App* sub) {
    sub->add_option("--config", opt.config, "key = value configuration file");
    sub->add_option("--out", opt.out, "output directory (overrides output_dir)");
  };

  CLI::App* simulate = app.add_subcommand("simulate", "run the solver and write h/u/v.ksnp");
  add_common(simulate);

  CLI::App* rom = app.add_subcommand("rom", "decompose snapshots and select leading modes");
  add_common(rom);
  rom->add_option("--eps", opt.eps, "relative error threshold (overrides epsilon)");
  rom->add_option("--field", opt.field, "process only this field (h, u or v)");

  CLI::App* reconstruct = app.add_subcommand("reconstruct", "compare a field with its model");
  add_common(reconstruct);
  reconstruct->add_option("--time", opt.time, "snapshot index, or a time such as 50h or 180000s");
  reconstruct->add_option("--field", opt.field, "field to reconstruct (default h)");

  CLI::App* vort = app.add_subcommand("vorticity", "compare vorticity of data and models");
  add_common(vort);
  vort->add_option("--time", opt.time, "snapshot index, or a time such as 50h or 180000s");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kIoFailure;
  }

  const std::string command = app.get_subcommands().front()->get_name();
  try {
    return run(command, opt);
  } catch (const koopman::SimulationFailure& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kSolverFailure;
  } catch (const koopman::IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kIoFailure;
  } catch (const koopman::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kIoFailure;
  } catch (const koopman::IndexOutOfRange& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kIoFailure;
  } catch (const koopman::InvalidArgument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kIoFailure;
  } catch (const koopman::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kSolverFailure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kIoFailure;
  }
}
