// Command-line front end: configuration parsing, per-replica RNG streams,
// experiment orchestration and CSV emission.
//
// The tool exposes one subcommand per experiment family
//     torus | discrete | rayknight-validate | nonadiabatic-2d | bins | simp
// with the global flags --seed, --replicas, --threads, --out, --config.
// Parameters can also come from a flat `key = value` config file; command-line
// flags take precedence, unknown keys are rejected, and the effective
// configuration is echoed to `<out>/effective_config.txt` (itself a valid
// config file).  Each run writes the per-experiment CSVs plus a `summary.csv`
// of the scalars the validation suite cares about; failures leave a
// machine-readable `<out>/failure.json` and a nonzero exit status.
//
// Outputs are deterministic: a fixed (config, seed) yields byte-identical
// CSVs across runs and across --threads values, because every replica draws
// from its own stream derived from (seed, replica index) and results are
// merged in replica-index order.

#pragma once

#include <string>
#include <vector>

namespace metasim {

// Entry point of the `metasim` tool; `args` excludes the program name.
// Runs fully in-process (no exit/abort on errors) so tests can drive
// subcommands directly.  Returns the process exit status.
int cli_main(const std::vector<std::string>& args);

}  // namespace metasim
