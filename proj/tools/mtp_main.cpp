#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "mtp/mtp.hpp"

namespace {

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  bool strict_positivity = false;
  int threads = 0;
};

void add_common(CLI::App* cmd, Options& o) {
  cmd->add_option("--config", o.config, "Run configuration (JSON)")->required();
  cmd->add_option("--seed", o.seed, "Master seed (overrides the config)");
  cmd->add_option("--out", o.out, "Output directory (overrides the config)");
  cmd->add_option("--threads", o.threads, "Worker threads (default: MTP_THREADS or 1)")->check(CLI::NonNegativeNumber);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Modified treatment policy estimation for state policy panels"};
  app.require_subcommand(1);
  Options o;
  auto* ingest = app.add_subcommand("ingest", "Build analysis panels from county-year and law-date tables");
  auto* diagnose = app.add_subcommand("diagnose", "Law co-occurrence and entanglement diagnostics");
  auto* estimate = app.add_subcommand("estimate", "Cross-fitted TMLE for a shift or delay policy");
  auto* simulate = app.add_subcommand("simulate", "Simulated panels with known counterfactual truth");
  for (auto* c : {ingest, diagnose, estimate, simulate}) add_common(c, o);
  estimate->add_flag("--strict-positivity", o.strict_positivity, "Exit with code 3 on a practical positivity violation");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : mtp::cli::kExitInput;
  }

  try {
    if (o.threads > 0) mtp::set_threads(o.threads);
    auto cfg = mtp::load_run_config(o.config);
    if (o.seed) cfg.seed = *o.seed;
    if (!o.out.empty()) cfg.output_dir = o.out;
    const std::filesystem::path out = cfg.output_dir;
    if (ingest->parsed()) return mtp::cli::cmd_ingest(cfg, out);
    if (diagnose->parsed()) return mtp::cli::cmd_diagnose(cfg, out);
    if (estimate->parsed()) return mtp::cli::cmd_estimate(cfg, out, o.strict_positivity);
    if (simulate->parsed()) return mtp::cli::cmd_simulate(cfg, out);
  } catch (const mtp::IdentificationError& e) {
    std::cerr << "identification abort: " << e.what() << "\n";
    return mtp::cli::kExitIdentification;
  } catch (const mtp::InputError& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return mtp::cli::kExitInput;
  } catch (const mtp::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return mtp::cli::kExitInput;
  } catch (const mtp::DomainError& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return mtp::cli::kExitInput;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
