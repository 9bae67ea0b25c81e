// Batch command-line front end.
//
// Subcommands: decompose, certify, factor, saddle, frechet, plot.
// Flags:       --config <path>  --out <dir>  --seed <u64>  --threads <n>
//
// Every run writes its outputs plus resolved_config.json into --out; each
// output file embeds the FNV-1a hash of the resolved configuration, and
// identical config + seed reproduce byte-identical files.
#pragma once

namespace nearid {

// Exit codes.
inline constexpr int kExitOk = 0;        // success
inline constexpr int kExitFailure = 1;   // internal / configuration error
inline constexpr int kExitRejected = 2;  // mathematically expected rejection
                                         // (infeasible schedule, wrong
                                         // orientation, identity generator,
                                         // outside the near-identity regime)

int run_cli(int argc, const char* const* argv);

}  // namespace nearid
