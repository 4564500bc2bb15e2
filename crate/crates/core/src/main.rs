// SPDX-License-Identifier: Apache-2.0

fn main() {
    std::process::exit(tenantsim::cli::main(std::env::args_os()));
}
