// SPDX-License-Identifier: Apache-2.0

fn main() -> std::process::ExitCode {
    stairwise::cli::main_entry()
}
